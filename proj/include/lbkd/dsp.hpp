#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <fftw3.h>

#include "lbkd/error.hpp"
#include "lbkd/tensor.hpp"

namespace lbkd {

inline constexpr int kSampleRate = 16000;

struct AudioSignal {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// In-place complex FFT of a fixed size, backed by FFTW. Plans are made with
// FFTW_ESTIMATE | FFTW_UNALIGNED so results don't depend on buffer address.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n) {
    if (n < 2 || (n & (n - 1)) != 0) throw ValueError("FFT size must be a power of two >= 2");
    auto* scratch = fftw_alloc_complex(n);
    const int len = static_cast<int>(n);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    forward_.reset(fftw_plan_dft_1d(len, scratch, scratch, FFTW_FORWARD, flags));
    backward_.reset(fftw_plan_dft_1d(len, scratch, scratch, FFTW_BACKWARD, flags));
    fftw_free(scratch);
    if (!forward_ || !backward_) throw ValueError("FFTW could not plan size " + std::to_string(n));
  }

  std::size_t size() const { return n_; }

  // X[k] = sum_n x[n] exp(-2 pi i k n / N); inverse is unnormalized.
  void transform(std::span<std::complex<double>> x, bool inverse = false) const {
    if (x.size() != n_) throw ShapeError("FFT buffer has " + std::to_string(x.size()) + " points, plan has " + std::to_string(n_));
    auto* io = reinterpret_cast<fftw_complex*>(x.data());
    fftw_execute_dft(inverse ? backward_.get() : forward_.get(), io, io);
  }

 private:
  struct PlanDeleter {
    void operator()(fftw_plan p) const { fftw_destroy_plan(p); }
  };
  using Plan = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDeleter>;

  std::size_t n_;
  Plan forward_;
  Plan backward_;
};

// Periodic Hann: w[n] = 0.5 - 0.5 cos(2 pi n / N).
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

struct StftConfig {
  std::size_t fft_size = 512;
  std::size_t hop = 256;

  std::size_t full_bins() const { return fft_size / 2 + 1; }
  // Bins handed to the models: the Nyquist bin is dropped.
  std::size_t model_bins() const { return fft_size / 2; }
  std::size_t pad() const { return fft_size / 2; }
  std::size_t frames_for(std::size_t length) const { return length / hop + 1; }
  // Signal length whose frame count is `frames` (inverse of frames_for).
  std::size_t length_for(std::size_t frames) const { return (frames - 1) * hop; }
};

// Dense T x F grid of reals; used for magnitudes and masks.
struct Grid {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> values;

  double& at(std::size_t t, std::size_t f) { return values[t * bins + f]; }
  double at(std::size_t t, std::size_t f) const { return values[t * bins + f]; }
};

using MagnitudeSpec = Grid;

// Unit phasors of an STFT; zero-magnitude cells get phase 0.
struct PhaseGrid {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> cos;
  std::vector<double> sin;
};

// Complex one-sided STFT with all fft_size/2 + 1 bins kept, so that it can be
// inverted exactly.
struct Spectrogram {
  StftConfig config;
  std::size_t frames = 0;
  std::vector<std::complex<double>> values;  // frames x full_bins

  std::size_t bins() const { return config.full_bins(); }
  const std::complex<double>& at(std::size_t t, std::size_t f) const {
    return values[t * bins() + f];
  }

  // T x fft_size/2 magnitudes (Nyquist dropped), the model input domain.
  MagnitudeSpec magnitude() const { return magnitude(config.model_bins()); }

  MagnitudeSpec magnitude(std::size_t n_bins) const {
    Grid g{frames, n_bins, std::vector<double>(frames * n_bins)};
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t f = 0; f < n_bins; ++f) g.at(t, f) = std::abs(at(t, f));
    return g;
  }

  PhaseGrid phase() const {
    const std::size_t nb = bins();
    PhaseGrid p{frames, nb, std::vector<double>(frames * nb), std::vector<double>(frames * nb)};
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double m = std::abs(values[i]);
      p.cos[i] = m > 0.0 ? values[i].real() / m : 1.0;
      p.sin[i] = m > 0.0 ? values[i].imag() / m : 0.0;
    }
    return p;
  }
};

namespace detail {

// numpy-style "reflect" padding (edge sample not repeated).
inline std::vector<double> reflect_pad(std::span<const double> x, std::size_t pad) {
  if (x.size() <= pad) throw ValueError("signal too short for reflection padding");
  std::vector<double> out(x.size() + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) out[i] = x[pad - i];
  std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(pad));
  for (std::size_t i = 0; i < pad; ++i) out[pad + x.size() + i] = x[x.size() - 2 - i];
  return out;
}

// Sum of squared windows at every padded position of a T-frame signal.
inline std::vector<double> window_envelope(const StftConfig& cfg, std::size_t frames,
                                           const std::vector<double>& window) {
  std::vector<double> env(cfg.length_for(frames) + cfg.fft_size, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t n = 0; n < cfg.fft_size; ++n) env[t * cfg.hop + n] += window[n] * window[n];
  return env;
}

// Inverse real FFT of one frame given `n_bins` one-sided bins (missing bins,
// including Nyquist when n_bins == N/2, are zero).
inline void inverse_frame(const Fft& fft, std::span<const std::complex<double>> half,
                          std::vector<std::complex<double>>& buf, std::span<double> out) {
  const std::size_t n = fft.size();
  std::fill(buf.begin(), buf.end(), std::complex<double>{});
  for (std::size_t k = 0; k < half.size() && k <= n / 2; ++k) {
    buf[k] = half[k];
    if (k != 0 && k != n / 2) buf[n - k] = std::conj(half[k]);
  }
  buf[0] = {buf[0].real(), 0.0};
  if (half.size() > n / 2) buf[n / 2] = {buf[n / 2].real(), 0.0};
  fft.transform(buf, true);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real() / static_cast<double>(n);
}

}  // namespace detail

// Center-padded (reflect, fft_size/2 each side) periodic-Hann STFT.
// T = floor(len / hop) + 1, so 32000 samples give 126 frames at hop 256.
inline Spectrogram stft(const AudioSignal& signal, const StftConfig& cfg = {}) {
  if (signal.size() < cfg.fft_size) {
    throw ValueError("stft: signal of " + std::to_string(signal.size()) +
                     " samples is shorter than one frame (" + std::to_string(cfg.fft_size) + ")");
  }
  const auto padded = detail::reflect_pad(signal.samples, cfg.pad());
  const auto window = hann_window(cfg.fft_size);
  const Fft fft(cfg.fft_size);
  Spectrogram spec{cfg, cfg.frames_for(signal.size()), {}};
  spec.values.resize(spec.frames * cfg.full_bins());
  std::vector<std::complex<double>> buf(cfg.fft_size);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t n = 0; n < cfg.fft_size; ++n) buf[n] = padded[t * cfg.hop + n] * window[n];
    fft.transform(buf);
    std::copy_n(buf.begin(), cfg.full_bins(),
                spec.values.begin() + static_cast<std::ptrdiff_t>(t * cfg.full_bins()));
  }
  return spec;
}

// Windowed overlap-add inverse normalised by the squared-window envelope.
// `mag` may carry fft_size/2 bins (Nyquist restored as zero) or all
// fft_size/2 + 1. `length` defaults to (T - 1) * hop.
inline AudioSignal istft(const MagnitudeSpec& mag, const PhaseGrid& phase, const StftConfig& cfg = {},
                         std::size_t length = 0) {
  if (mag.frames != phase.frames || mag.bins > phase.bins) {
    throw ShapeError("istft: magnitude grid " + std::to_string(mag.frames) + "x" +
                     std::to_string(mag.bins) + " does not match phase grid " +
                     std::to_string(phase.frames) + "x" + std::to_string(phase.bins));
  }
  if (mag.bins != cfg.model_bins() && mag.bins != cfg.full_bins()) {
    throw ShapeError("istft: expected " + std::to_string(cfg.model_bins()) + " or " +
                     std::to_string(cfg.full_bins()) + " bins, got " + std::to_string(mag.bins));
  }
  if (length == 0) length = cfg.length_for(mag.frames);
  const auto window = hann_window(cfg.fft_size);
  const auto env = detail::window_envelope(cfg, mag.frames, window);
  const Fft fft(cfg.fft_size);
  std::vector<double> acc(env.size(), 0.0);
  std::vector<std::complex<double>> half(mag.bins), buf(cfg.fft_size);
  std::vector<double> frame(cfg.fft_size);
  for (std::size_t t = 0; t < mag.frames; ++t) {
    for (std::size_t f = 0; f < mag.bins; ++f) {
      const std::size_t i = t * phase.bins + f;
      half[f] = mag.at(t, f) * std::complex<double>(phase.cos[i], phase.sin[i]);
    }
    detail::inverse_frame(fft, half, buf, frame);
    for (std::size_t n = 0; n < cfg.fft_size; ++n) acc[t * cfg.hop + n] += frame[n] * window[n];
  }
  AudioSignal out{std::vector<double>(length, 0.0), kSampleRate};
  for (std::size_t j = 0; j < length; ++j) {
    const std::size_t p = j + cfg.pad();
    if (p < env.size() && env[p] > 1e-11) out.samples[j] = acc[p] / env[p];
  }
  return out;
}

// Differentiable counterpart of istft for a fixed phase: maps a [T, F]
// magnitude tensor to a [length] signal tensor. The map is linear in the
// magnitudes; its adjoint is a windowed forward FFT projected on the phase.
inline Tensor istft(const Tensor& mag, std::shared_ptr<const PhaseGrid> phase,
                    const StftConfig& cfg = {}, std::size_t length = 0) {
  if (mag.rank() != 2) throw ShapeError("istft: magnitude must be [T, F], got " + to_string(mag.shape()));
  const std::size_t frames = mag.dim(0), bins = mag.dim(1);
  Grid grid{frames, bins, std::vector<double>(mag.data().begin(), mag.data().end())};
  const AudioSignal y = istft(grid, *phase, cfg, length);
  length = y.size();

  auto mn = mag.node();
  return detail::make_result({length}, Buffer(y.samples.begin(), y.samples.end()), {mag}, "istft",
                             [mn, phase, cfg, frames, bins, length](detail::Node& self) {
    const auto window = hann_window(cfg.fft_size);
    const auto env = detail::window_envelope(cfg, frames, window);
    const Fft fft(cfg.fft_size);
    const double n = static_cast<double>(cfg.fft_size);
    // d(out[j]) / d(acc[p]) = 1 / env[p] on the kept samples.
    std::vector<double> gacc(env.size(), 0.0);
    for (std::size_t j = 0; j < length; ++j) {
      const std::size_t p = j + cfg.pad();
      if (p < env.size() && env[p] > 1e-11) gacc[p] = self.grad[j] / env[p];
    }
    auto& gm = mn->ensure_grad();
    std::vector<std::complex<double>> buf(cfg.fft_size);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t i = 0; i < cfg.fft_size; ++i) buf[i] = gacc[t * cfg.hop + i] * window[i];
      fft.transform(buf);
      for (std::size_t f = 0; f < bins; ++f) {
        const std::size_t pi = t * phase->bins + f;
        const double c = (f == 0 || f == cfg.fft_size / 2) ? 1.0 : 2.0;
        gm[t * bins + f] +=
            c / n * (phase->cos[pi] * buf[f].real() + phase->sin[pi] * buf[f].imag());
      }
    }
  });
}

inline Tensor to_tensor(const Grid& g, bool requires_grad = false) {
  return Tensor({g.frames, g.bins}, g.values, requires_grad);
}

inline Tensor to_tensor(const AudioSignal& s) { return Tensor({s.size()}, s.samples); }

}  // namespace lbkd
