#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "lbkd/error.hpp"
#include "lbkd/tensor.hpp"

namespace lbkd {

// Ratios are formed as num / (den + kRatioEps * num), which caps every
// dB-valued measure at +120 dB (den = 0) while staying scale-invariant.
// Results are clamped to [-120, 120].
inline constexpr double kDbCap = 120.0;
inline constexpr double kRatioEps = 1e-12;
inline constexpr double kNormEps = 1e-8;

struct LossWeights {
  double lambda_kd = 1.0;
  double lambda_out = 1.0;
};

// 1 - <a, b> / (|a| |b|) over the flattened (row-major) tensors.
inline Tensor cosine_distance(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_distance: element counts differ, " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const Tensor na = l2_norm(a);
  const Tensor nb = l2_norm(b);
  if (na.item() <= kNormEps || nb.item() <= kNormEps) {
    throw ValueError("cosine_distance: zero-norm operand (angle undefined)");
  }
  return 1.0 - dot(a, b) / (na * nb);
}

namespace detail {

inline double energy(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

inline double capped_db(double num, double den) {
  if (num <= 0.0) return -kDbCap;
  return std::clamp(10.0 * std::log10(num / (den + kRatioEps * num)), -kDbCap, kDbCap);
}

inline void check_pair(std::span<const double> target, std::span<const double> estimate, const char* what) {
  if (target.size() != estimate.size()) {
    throw ShapeError(std::string(what) + ": target has " + std::to_string(target.size()) +
                     " samples, estimate " + std::to_string(estimate.size()));
  }
  if (energy(target) == 0.0) throw ValueError(std::string(what) + ": target signal is all zeros");
}

}  // namespace detail

// Scale-invariant SNR in dB: the estimate is projected on the target,
// s = (<x^, x> / |x|^2) x, and the ratio |s|^2 / |s - x^|^2 is reported.
inline double si_snr(std::span<const double> target, std::span<const double> estimate) {
  detail::check_pair(target, estimate, "si_snr");
  const double tt = detail::energy(target);
  double xt = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) xt += estimate[i] * target[i];
  const double alpha = xt / tt;
  double ps = 0.0, pe = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double s = alpha * target[i];
    ps += s * s;
    pe += (s - estimate[i]) * (s - estimate[i]);
  }
  return detail::capped_db(ps, pe);
}

// Computed exactly as si_snr; reported under the metric's usual name.
inline double si_sdr(std::span<const double> target, std::span<const double> estimate) {
  detail::check_pair(target, estimate, "si_sdr");
  return si_snr(target, estimate);
}

// Plain energy-ratio SDR, 10 log10(|x|^2 / |x - x^|^2); not scale-invariant.
inline double sdr(std::span<const double> target, std::span<const double> estimate) {
  detail::check_pair(target, estimate, "sdr");
  double pe = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) pe += (target[i] - estimate[i]) * (target[i] - estimate[i]);
  return detail::capped_db(detail::energy(target), pe);
}

// Negated si_snr on the tape; the target is a constant.
inline Tensor si_snr_loss(const Tensor& target, const Tensor& estimate) {
  detail::check_pair(target.data(), estimate.data(), "si_snr_loss");
  const double tt = detail::energy(target.data());
  const Tensor x = target.detach();
  const Tensor alpha = dot(estimate, x) * (1.0 / tt);
  const Tensor s = x * alpha;
  const Tensor e = s - estimate;
  const Tensor ps = dot(s, s);
  if (ps.item() <= 0.0) {
    // Estimate orthogonal to the target: value sits at the floor, no gradient.
    return sum(estimate * 0.0) + kDbCap;
  }
  const Tensor pe = dot(e, e);
  const Tensor db = 10.0 * log10(ps / (pe + ps * kRatioEps));
  return neg(clamp(db, -kDbCap, kDbCap));
}

inline Tensor joint_loss(const Tensor& kd, const Tensor& out, const LossWeights& w = {}) {
  return kd * w.lambda_kd + out * w.lambda_out;
}

inline double joint_loss(double kd, double out, const LossWeights& w = {}) {
  return w.lambda_kd * kd + w.lambda_out * out;
}

}  // namespace lbkd
