#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "lbkd/dsp.hpp"
#include "lbkd/losses.hpp"
#include "lbkd/models.hpp"
#include "lbkd/random.hpp"
#include "lbkd/tensor.hpp"

namespace lbkd {

// Central finite differences against the tape. The reported error of a case
// is, over its inputs, the largest |g_tape - g_fd| / max(|g_tape|, |g_fd|)
// with norms taken over the checked entries of that input. The denominator
// is floored at kGradcheckFloor: a gradient that is identically zero (a conv
// bias feeding an instance norm) is compared in absolute terms.
inline constexpr double kGradcheckFloor = 1e-6;

struct GradcheckCase {
  std::string name;
  double tolerance = 1e-4;
  std::function<Tensor()> loss;
  std::vector<NamedTensor> inputs;
  std::size_t max_entries = 64;  // per input; spread evenly when larger
};

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  double seconds = 0.0;
  bool pass() const { return std::isfinite(max_rel_error) && max_rel_error <= tolerance; }
};

inline GradcheckResult gradcheck(const GradcheckCase& c, double h = 1e-5) {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckResult r{c.name, 0.0, c.tolerance, 0, 0.0};
  for (auto in : c.inputs) in.tensor.zero_grad();
  backward(c.loss());
  for (auto in : c.inputs) {
    const std::size_t n = in.tensor.size();
    const std::vector<double> analytic(in.tensor.grad().begin(), in.tensor.grad().end());
    const std::size_t count = std::min(n, c.max_entries);
    double diff2 = 0.0, a2 = 0.0, f2 = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t i = count == n ? k : k * n / count;
      auto data = in.tensor.mutable_data();
      const double orig = data[i];
      double plus, minus;
      {
        NoGradGuard guard;
        data[i] = orig + h;
        plus = c.loss().item();
        data[i] = orig - h;
        minus = c.loss().item();
        data[i] = orig;
      }
      const double fd = (plus - minus) / (2.0 * h);
      diff2 += (fd - analytic[i]) * (fd - analytic[i]);
      a2 += analytic[i] * analytic[i];
      f2 += fd * fd;
      ++r.checked;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(f2), kGradcheckFloor});
    r.max_rel_error = std::max(r.max_rel_error, std::sqrt(diff2) / denom);
    in.tensor.zero_grad();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

namespace detail {

inline Tensor random_tensor(const Shape& shape, Rng& rng, bool requires_grad = true, double scale = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor(shape, std::move(v), requires_grad);
}

// Values bounded away from zero, for ops with a kink there.
inline Tensor off_zero_tensor(const Shape& shape, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) {
    const double m = rng.uniform(0.05, 2.0);
    x = rng.uniform() < 0.5 ? -m : m;
  }
  return Tensor(shape, std::move(v), true);
}

}  // namespace detail

// Every differentiable op, each contracted with a fixed random tensor so
// that all output entries contribute, plus the two losses and a complete
// distillation step on 8x16 models.
inline std::vector<GradcheckCase> gradcheck_suite(std::uint64_t seed = 0) {
  using detail::random_tensor;
  Rng rng(derive_seed({seed, 0x67726164ULL}));
  std::vector<GradcheckCase> cases;
  auto probe = [&rng](const Shape& s) { return random_tensor(s, rng, false); };

  {
    auto x = random_tensor({2, 6, 7}, rng), k = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
    auto r = probe({3, 6, 4});
    cases.push_back({"conv2d", 1e-4, [=] { return dot(conv2d(x, k, b, {1, 2}, {1, 1}), r); },
                     {{"input", x}, {"kernels", k}, {"bias", b}}});
  }
  {
    auto x = random_tensor({3, 4, 4}, rng), k = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({2}, rng);
    auto r = probe({2, 8, 7});
    cases.push_back({"conv2d_transpose", 1e-4,
                     [=] { return dot(conv2d_transpose(x, k, b, {2, 2}, {1, 1}, {1, 0}), r); },
                     {{"input", x}, {"kernels", k}, {"bias", b}}});
  }
  {
    auto x = random_tensor({3, 4, 5}, rng), g = random_tensor({3}, rng), b = random_tensor({3}, rng);
    auto r = probe({3, 4, 5});
    cases.push_back({"instance_norm", 1e-4, [=] { return dot(instance_norm(x, g, b), r); },
                     {{"input", x}, {"gamma", g}, {"beta", b}}});
  }
  {
    auto x = detail::off_zero_tensor({40}, rng);
    auto r = probe({40});
    cases.push_back({"leaky_relu", 1e-4, [=] { return dot(leaky_relu(x), r); }, {{"input", x}}});
  }
  {
    auto x = random_tensor({40}, rng, true, 2.0);
    auto r = probe({40});
    cases.push_back({"sigmoid", 1e-4, [=] { return dot(sigmoid(x), r); }, {{"input", x}}});
  }
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const Shape in{3, 4, 5};
    Shape out = in;
    out[axis] = 2;
    auto x = random_tensor(in, rng), w = random_tensor({2, in[axis]}, rng), b = random_tensor({2}, rng);
    auto r = probe(out);
    cases.push_back({std::string("axis_linear(") + "CHW"[axis] + ")", 1e-4,
                     [=] { return dot(axis_linear(x, w, b, axis), r); },
                     {{"input", x}, {"weight", w}, {"bias", b}}});
  }
  {
    const StftConfig cfg{32, 16};
    std::vector<double> sig(112);
    for (auto& v : sig) v = rng.normal();
    const auto spec = stft(AudioSignal{sig, kSampleRate}, cfg);
    auto phase = std::make_shared<const PhaseGrid>(spec.phase());
    auto mag = to_tensor(spec.magnitude(), true);
    auto r = probe({112});
    cases.push_back({"istft", 1e-4, [=] { return dot(istft(mag, phase, cfg, 112), r); }, {{"magnitude", mag}}});
  }
  {
    auto a = random_tensor({3, 4, 5}, rng), b = random_tensor({3, 4, 5}, rng);
    cases.push_back({"cosine_distance", 1e-4, [=] { return cosine_distance(a, b); }, {{"a", a}, {"b", b}}});
  }
  {
    auto target = random_tensor({200}, rng, false);
    std::vector<double> est(200);
    for (std::size_t i = 0; i < est.size(); ++i) est[i] = 0.7 * target[i] + 0.5 * rng.normal();
    auto e = Tensor({200}, est, true);
    cases.push_back({"si_snr_loss", 1e-4, [=] { return si_snr_loss(target, e); }, {{"estimate", e}}});
  }
  {
    // Teacher latent {3, 8, 4}, student latent {2, 8, 4}: a (C) adapter.
    const StftConfig cfg{32, 16};
    auto teacher = std::make_shared<UNetModel>(preset("tiny"), derive_seed({seed, 1}));
    auto student = std::make_shared<UNetModel>(
        make_config("tiny_student", {8, 16}, {3, 3}, {{1, 2}, {1, 2}}, {2, 2}, {2, 8, 4}), derive_seed({seed, 2}));
    auto adapter = std::make_shared<BottleneckAdapter>(teacher->latent_shape(), student->latent_shape(),
                                                       std::vector<LatentAxis>{LatentAxis::C}, derive_seed({seed, 3}));
    std::vector<double> clean(112), noisy(112);
    for (std::size_t i = 0; i < clean.size(); ++i) {
      clean[i] = 0.5 * std::sin(0.3 * static_cast<double>(i)) + 0.2 * std::sin(1.1 * static_cast<double>(i));
      noisy[i] = clean[i] + 0.3 * rng.normal();
    }
    const auto spec = stft(AudioSignal{noisy, kSampleRate}, cfg);
    auto phase = std::make_shared<const PhaseGrid>(spec.phase());
    auto mag = to_tensor(spec.magnitude());
    auto target = Tensor({112}, clean);
    auto loss = [=] {
      Tensor t_latent;
      {
        NoGradGuard guard;
        t_latent = teacher->forward(mag).latent;
      }
      const auto s = student->forward(mag);
      const Tensor kd = cosine_distance(adapter->forward(t_latent), s.latent);
      const Tensor out = si_snr_loss(target, istft(mag * s.mask, phase, cfg, 112));
      return joint_loss(kd, out);
    };
    auto inputs = student->parameters();
    for (auto& p : adapter->parameters()) inputs.push_back(p);
    cases.push_back({"unet+bottleneck+joint_loss", 1e-3, loss, inputs, 32});
  }
  return cases;
}

inline std::string format_gradcheck(const std::vector<GradcheckResult>& results) {
  std::string s;
  char line[160];
  std::snprintf(line, sizeof line, "%-28s %8s %14s %10s %8s %s\n", "case", "entries", "max_rel_error", "tolerance",
                "seconds", "status");
  s += line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-28s %8zu %14.3e %10.0e %8.3f %s\n", r.name.c_str(), r.checked,
                  r.max_rel_error, r.tolerance, r.seconds, r.pass() ? "ok" : "FAIL");
    s += line;
  }
  return s;
}

}  // namespace lbkd
