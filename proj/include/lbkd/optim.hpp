#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lbkd/error.hpp"
#include "lbkd/models.hpp"

namespace lbkd {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamSlot {
  std::vector<double> m, v;
};

// One bias-corrected Adam update of `param` in place. `step` is the index of
// this update, starting at 1.
inline void adam_update(std::span<double> param, std::span<const double> grad, AdamSlot& slot,
                        std::size_t step, const AdamConfig& cfg) {
  if (param.size() != grad.size()) {
    throw ShapeError("adam: parameter has " + std::to_string(param.size()) + " elements, gradient " +
                     std::to_string(grad.size()));
  }
  if (slot.m.size() != param.size()) {
    slot.m.assign(param.size(), 0.0);
    slot.v.assign(param.size(), 0.0);
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * grad[i];
    slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mh = slot.m[i] / c1, vh = slot.v[i] / c2;
    param[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
  }
}

// Adam over a fixed parameter list. Parameters without a gradient this step
// are treated as having a zero gradient.
class Adam {
 public:
  Adam(std::vector<NamedTensor> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg), slots_(params_.size()) {}

  std::size_t steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<AdamSlot>& slots() const { return slots_; }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  // Checks every gradient before touching any parameter, so a non-finite
  // gradient leaves the model and the moments untouched.
  void step() {
    for (const auto& p : params_) {
      if (!p.tensor.has_grad()) continue;
      for (double g : p.tensor.grad()) {
        if (!std::isfinite(g)) {
          throw TrainingError("adam: non-finite gradient in '" + p.name + "' at step " +
                              std::to_string(step_ + 1));
        }
      }
    }
    ++step_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& t = params_[i].tensor;
      const std::vector<double> zeros = t.has_grad() ? std::vector<double>{} : std::vector<double>(t.size(), 0.0);
      adam_update(t.mutable_data(), t.has_grad() ? t.grad() : std::span<const double>(zeros), slots_[i], step_, cfg_);
    }
  }

 private:
  std::vector<NamedTensor> params_;
  AdamConfig cfg_;
  std::vector<AdamSlot> slots_;
  std::size_t step_ = 0;
};

// Stops after `patience` consecutive epochs without an improvement larger
// than min_delta over the best validation loss seen so far.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience = 10, double min_delta = 1e-4)
      : patience_(patience), min_delta_(min_delta) {
    if (patience == 0) throw ConfigError("patience: must be >= 1");
  }

  // Returns true when `loss` is the new best.
  bool update(double loss) {
    if (loss < best_ - min_delta_) {
      best_ = loss;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
};

}  // namespace lbkd
