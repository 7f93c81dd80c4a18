#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lbkd/checkpoint.hpp"
#include "lbkd/data.hpp"
#include "lbkd/dsp.hpp"
#include "lbkd/losses.hpp"
#include "lbkd/metrics.hpp"
#include "lbkd/models.hpp"
#include "lbkd/optim.hpp"
#include "lbkd/stoi.hpp"

namespace lbkd {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double min_delta = 1e-4;
  std::uint64_t seed = 0;
  LossWeights weights;
  std::string scenario = "t1s1";
  AdamConfig adam;
  StftConfig stft;

  void check() const {
    if (batch_size == 0) throw ConfigError("train.batch_size: must be >= 1");
    if (patience == 0) throw ConfigError("train.patience: must be >= 1");
    if (max_epochs == 0) throw ConfigError("train.max_epochs: must be >= 1");
    if (!(adam.lr > 0.0)) throw ConfigError("train.lr: must be positive");
  }
};

// Model-side view of one mixture: the noisy magnitude (Nyquist dropped), the
// noisy phase used for resynthesis, and the clean target.
struct Features {
  Tensor mag;
  std::shared_ptr<const PhaseGrid> phase;
  Tensor clean;
};

inline Features features(const MixExample& ex, const StftConfig& cfg) {
  const auto spec = stft(ex.noisy, cfg);
  return {to_tensor(spec.magnitude()), std::make_shared<const PhaseGrid>(spec.phase()), to_tensor(ex.clean)};
}

// Mask the noisy magnitude and resynthesize with the noisy phase.
inline Tensor enhance(const Tensor& mask, const Features& f, const StftConfig& cfg) {
  return istft(f.mag * mask, f.phase, cfg, f.clean.size());
}

inline AudioSignal enhance(const UNetModel& model, const AudioSignal& noisy, const StftConfig& cfg = {}) {
  NoGradGuard guard;
  const auto spec = stft(noisy, cfg);
  const Tensor mag = to_tensor(spec.magnitude());
  const Tensor mask = model.forward(mag).mask;
  const Tensor y = istft(mag * mask, std::make_shared<const PhaseGrid>(spec.phase()), cfg, noisy.size());
  return {std::vector<double>(y.data().begin(), y.data().end()), noisy.sample_rate};
}

// --- History -----------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double l_kd = 0.0;   // mean over the epoch's training examples; 0 without KD
  double l_out = 0.0;
  double l_tot = 0.0;  // lambda_kd * l_kd + lambda_out * l_out
  double val_loss = 0.0;
  double best_val = 0.0;
  bool improved = false;
};

inline std::string history_header() { return "epoch\tl_kd\tl_out\tl_tot\tval_loss\tbest_val\timproved"; }

inline std::string format_record(const EpochRecord& r) {
  std::ostringstream os;
  os << r.epoch << '\t' << detail::fmt_double(r.l_kd) << '\t' << detail::fmt_double(r.l_out) << '\t'
     << detail::fmt_double(r.l_tot) << '\t' << detail::fmt_double(r.val_loss) << '\t'
     << detail::fmt_double(r.best_val) << '\t' << (r.improved ? 1 : 0);
  return os.str();
}

inline std::string format_history(const std::vector<EpochRecord>& h) {
  std::string s = history_header() + "\n";
  for (const auto& r : h) s += format_record(r) + "\n";
  return s;
}

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  bool stopped_early = false;
};

// --- Generic loop ------------------------------------------------------------

struct ExampleLosses {
  Tensor kd;  // undefined for supervised training
  Tensor out;
  Tensor tot;
};

using ExampleLossFn = std::function<ExampleLosses(const Features&)>;
using EpochCallback = std::function<void(const EpochRecord&)>;

namespace detail {

inline std::vector<std::vector<double>> snapshot(const std::vector<NamedTensor>& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

inline void restore(std::vector<NamedTensor>& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i)
    std::copy(values[i].begin(), values[i].end(), params[i].tensor.mutable_data().begin());
}

inline void check_finite(double v, const char* what, std::size_t epoch) {
  if (!std::isfinite(v)) {
    throw TrainingError(std::string("training diverged: ") + what + " is not finite at epoch " +
                        std::to_string(epoch));
  }
}

}  // namespace detail

// Mini-batch training of `params` with Adam and early stopping on the
// validation loss. Gradients of each example's loss, scaled by 1/B, are
// accumulated before every step, which equals the gradient of the batch mean.
// The parameters holding the best validation loss are restored at the end.
inline TrainResult fit(std::vector<NamedTensor> params, const SplitData& train, const SplitData& validation,
                       const TrainConfig& cfg, const ExampleLossFn& loss_fn, const EpochCallback& on_epoch = {}) {
  cfg.check();
  Adam opt(params, cfg.adam);
  EarlyStopping stopper(cfg.patience, cfg.min_delta);
  TrainResult result;
  auto best = detail::snapshot(params);
  // Validation mixtures are drawn once so that epochs are compared on the
  // same data.
  std::vector<Features> val_set;
  {
    EpochSampler val(validation, cfg.seed, kFrozenValidationEpoch);
    for (std::size_t i = 0; i < val.size(); ++i) val_set.push_back(features(val(i), cfg.stft));
  }

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochSampler sampler(train, cfg.seed, epoch);
    std::vector<std::size_t> order(sampler.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed({cfg.seed, 0x6f72646572ULL, epoch}));
    rng.shuffle(order);

    double kd_sum = 0.0, out_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      opt.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const auto f = features(sampler(order[k]), cfg.stft);
        const auto losses = loss_fn(f);
        detail::check_finite(losses.tot.item(), "training loss", epoch);
        if (losses.kd.defined()) kd_sum += losses.kd.item();
        out_sum += losses.out.item();
        backward(losses.tot * scale);
      }
      opt.step();
    }
    EpochRecord rec;
    rec.epoch = epoch;
    const double n = static_cast<double>(order.size());
    rec.l_kd = kd_sum / n;
    rec.l_out = out_sum / n;
    rec.l_tot = joint_loss(rec.l_kd, rec.l_out, cfg.weights);

    {
      NoGradGuard guard;
      double v = 0.0;
      for (const auto& f : val_set) v += loss_fn(f).tot.item();
      rec.val_loss = v / static_cast<double>(val_set.size());
    }
    detail::check_finite(rec.val_loss, "validation loss", epoch);
    rec.improved = stopper.update(rec.val_loss);
    rec.best_val = stopper.best();
    if (rec.improved) {
      best = detail::snapshot(params);
      result.best_epoch = epoch;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stopper.should_stop()) {
      result.stopped_early = true;
      break;
    }
  }
  detail::restore(params, best);
  result.best_val = stopper.best();
  return result;
}

// Supervised mask training with the negated SI-SNR of the resynthesized
// signal; this is the teacher pretraining objective.
inline ExampleLossFn supervised_loss(const UNetModel& model, const StftConfig& stft_cfg) {
  return [&model, stft_cfg](const Features& f) {
    const Tensor out = si_snr_loss(f.clean, enhance(model.forward(f.mag).mask, f, stft_cfg));
    return ExampleLosses{Tensor{}, out, out};
  };
}

inline TrainResult train_supervised(UNetModel& model, const SplitData& train, const SplitData& validation,
                                    const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  return fit(model.parameters(), train, validation, cfg, supervised_loss(model, cfg.stft), on_epoch);
}

inline TrainResult pretrain_teacher(UNetModel& teacher, const SplitData& train, const SplitData& validation,
                                    const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  return train_supervised(teacher, train, validation, cfg, on_epoch);
}

// The teacher runs without a tape, so its latent is a constant; the adapter
// maps it to the student's latent shape and the cosine distance to the
// student encoder output is added to the output loss.
inline ExampleLossFn distillation_loss(const UNetModel& teacher, const UNetModel& student,
                                       const BottleneckAdapter& adapter, const TrainConfig& cfg) {
  return [&teacher, &student, &adapter, cfg](const Features& f) {
    Tensor teacher_latent;
    {
      NoGradGuard guard;
      teacher_latent = teacher.forward(f.mag).latent;
    }
    const auto s = student.forward(f.mag);
    const Tensor kd = cosine_distance(adapter.forward(teacher_latent), s.latent);
    const Tensor out = si_snr_loss(f.clean, enhance(s.mask, f, cfg.stft));
    return ExampleLosses{kd, out, joint_loss(kd, out, cfg.weights)};
  };
}

// Teacher parameters are never handed to the optimizer; the student and the
// adapter are optimized together by one Adam instance.
inline TrainResult distill_student(const UNetModel& teacher, UNetModel& student, BottleneckAdapter& adapter,
                                   const SplitData& train, const SplitData& validation, const TrainConfig& cfg,
                                   const EpochCallback& on_epoch = {}) {
  if (adapter.input_shape() != teacher.latent_shape() || adapter.output_shape() != student.latent_shape()) {
    throw ShapeError("distill: adapter maps " + to_string(adapter.input_shape()) + " -> " +
                     to_string(adapter.output_shape()) + " but teacher latent is " +
                     to_string(teacher.latent_shape()) + " and student latent is " +
                     to_string(student.latent_shape()));
  }
  auto params = student.parameters();
  for (auto& p : adapter.parameters()) params.push_back(p);
  return fit(params, train, validation, cfg, distillation_loss(teacher, student, adapter, cfg), on_epoch);
}

// Builds the adapter for a named scenario; mismatching latents raise a
// ShapeError naming both shapes.
inline BottleneckAdapter scenario_adapter(const UNetModel& teacher, const UNetModel& student,
                                          const std::string& scenario, std::uint64_t seed) {
  return BottleneckAdapter(teacher.latent_shape(), student.latent_shape(), scenario_axes(scenario), seed);
}

// FNV-1a over the raw bytes of every parameter, in order.
inline std::string parameter_digest(const std::vector<NamedTensor>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.tensor.data().data());
    for (std::size_t i = 0; i < p.tensor.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return detail::hex64(h);
}

// --- Evaluation --------------------------------------------------------------

inline ExampleMetrics score(const std::string& id, const AudioSignal& clean, const AudioSignal& estimate) {
  return {id, sdr(clean.samples, estimate.samples), si_sdr(clean.samples, estimate.samples), stoi(clean, estimate)};
}

inline MetricsReport evaluate(const UNetModel& model, const std::vector<MixExample>& test,
                              const StftConfig& cfg = {}) {
  if (test.empty()) throw ConfigError("evaluate: empty test set");
  MetricsReport r;
  for (const auto& ex : test) r.examples.push_back(score(ex.id, ex.clean, enhance(model, ex.noisy, cfg)));
  return r;
}

// Metrics of the unprocessed mixtures.
inline MetricsReport evaluate_passthrough(const std::vector<MixExample>& test) {
  if (test.empty()) throw ConfigError("evaluate: empty test set");
  MetricsReport r;
  for (const auto& ex : test) r.examples.push_back(score(ex.id, ex.clean, ex.noisy));
  return r;
}

// A model whose mask is 1 everywhere: all weights zero and a final bias large
// enough that the sigmoid rounds to exactly 1.
inline UNetModel identity_mask_model(ModelConfig cfg) {
  UNetModel m(std::move(cfg), 0);
  for (auto& p : m.parameters()) {
    auto d = p.tensor.mutable_data();
    const bool gamma = p.name.ends_with(".gamma");
    std::fill(d.begin(), d.end(), gamma ? 1.0 : 0.0);
  }
  auto last_bias = m.decoder().back().bias;
  std::fill(last_bias.mutable_data().begin(), last_bias.mutable_data().end(), 40.0);
  return m;
}

// --- Repeats -----------------------------------------------------------------

struct RepeatSummary {
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsReport> runs;
  TableRow row;
};

// Runs `run(seed)` per seed and aggregates the per-run metric means.
inline RepeatSummary run_repeats(const std::string& label, const std::vector<std::uint64_t>& seeds,
                                 const std::function<MetricsReport(std::uint64_t)>& run) {
  if (seeds.size() < 2) throw ConfigError("repeats: need at least 2 runs, got " + std::to_string(seeds.size()));
  RepeatSummary s;
  s.seeds = seeds;
  std::vector<double> a, b, c;
  for (auto seed : seeds) {
    s.runs.push_back(run(seed));
    a.push_back(s.runs.back().sdr().mean);
    b.push_back(s.runs.back().si_sdr().mean);
    c.push_back(s.runs.back().stoi().mean);
  }
  s.row = {label, mean_std(a), mean_std(b), mean_std(c)};
  return s;
}

inline std::vector<std::uint64_t> repeat_seeds(std::uint64_t base, std::size_t n) {
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = base + i;
  return seeds;
}

}  // namespace lbkd
