#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "lbkd/dsp.hpp"
#include "lbkd/error.hpp"
#include "lbkd/wav.hpp"

namespace lbkd {

// Classic (non-extended) short-time objective intelligibility.
//   10 kHz analysis, 256-sample frames zero-padded to 512, 50% overlap,
//   15 one-third-octave bands from 150 Hz, 30-frame (384 ms) segments,
//   -15 dB clipping, frames more than 40 dB below the loudest clean frame
//   removed first.
namespace stoi_detail {

inline constexpr int kRate = 10000;
inline constexpr std::size_t kFrame = 256;
inline constexpr std::size_t kFft = 512;
inline constexpr std::size_t kBands = 15;
inline constexpr double kMinFreq = 150.0;
inline constexpr std::size_t kSegment = 30;
inline constexpr double kBeta = -15.0;
inline constexpr double kDynRange = 40.0;
inline constexpr double kEps = std::numeric_limits<double>::epsilon();

// Symmetric Hann of length n + 2 with its zero end points removed.
inline std::vector<double> inner_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) / static_cast<double>(n + 1));
  return w;
}

// Band-to-bin membership: rows are bands, columns one-sided FFT bins.
inline std::vector<std::vector<double>> third_octave_matrix() {
  const std::size_t n_bins = kFft / 2 + 1;
  std::vector<double> f(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) f[i] = static_cast<double>(i) * kRate / static_cast<double>(kFft);
  auto nearest = [&](double freq) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n_bins; ++i)
      if ((f[i] - freq) * (f[i] - freq) < (f[best] - freq) * (f[best] - freq)) best = i;
    return best;
  };
  std::vector<std::vector<double>> obm(kBands, std::vector<double>(n_bins, 0.0));
  for (std::size_t k = 0; k < kBands; ++k) {
    const double kd = static_cast<double>(k);
    const std::size_t lo = nearest(kMinFreq * std::pow(2.0, (2.0 * kd - 1.0) / 6.0));
    const std::size_t hi = nearest(kMinFreq * std::pow(2.0, (2.0 * kd + 1.0) / 6.0));
    for (std::size_t i = lo; i < hi; ++i) obm[k][i] = 1.0;
  }
  return obm;
}

inline void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const std::size_t hop = kFrame / 2;
  const auto w = inner_hann(kFrame);
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i + kFrame < x.size(); i += hop) starts.push_back(i);
  std::vector<double> energy(starts.size());
  for (std::size_t f = 0; f < starts.size(); ++f) {
    double e = 0.0;
    for (std::size_t n = 0; n < kFrame; ++n) e += (w[n] * x[starts[f] + n]) * (w[n] * x[starts[f] + n]);
    energy[f] = 20.0 * std::log10(std::sqrt(e) + kEps);
  }
  const double peak = energy.empty() ? 0.0 : *std::max_element(energy.begin(), energy.end());
  std::vector<std::size_t> kept;
  for (std::size_t f = 0; f < starts.size(); ++f)
    if (peak - kDynRange - energy[f] < 0.0) kept.push_back(starts[f]);
  const std::size_t len = kept.empty() ? 0 : (kept.size() - 1) * hop + kFrame;
  std::vector<double> xs(len, 0.0), ys(len, 0.0);
  for (std::size_t k = 0; k < kept.size(); ++k) {
    for (std::size_t n = 0; n < kFrame; ++n) {
      xs[k * hop + n] += w[n] * x[kept[k] + n];
      ys[k * hop + n] += w[n] * y[kept[k] + n];
    }
  }
  x.swap(xs);
  y.swap(ys);
}

// Third-octave band envelopes, bands x frames.
inline std::vector<std::vector<double>> band_envelopes(const std::vector<double>& x,
                                                       const std::vector<std::vector<double>>& obm) {
  const std::size_t hop = kFrame / 2;
  const auto w = inner_hann(kFrame);
  const Fft fft(kFft);
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i + kFrame < x.size(); i += hop) starts.push_back(i);
  std::vector<std::vector<double>> env(kBands, std::vector<double>(starts.size(), 0.0));
  std::vector<std::complex<double>> buf(kFft);
  for (std::size_t f = 0; f < starts.size(); ++f) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t n = 0; n < kFrame; ++n) buf[n] = w[n] * x[starts[f] + n];
    fft.transform(buf);
    for (std::size_t b = 0; b < kBands; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i <= kFft / 2; ++i) acc += obm[b][i] * std::norm(buf[i]);
      env[b][f] = std::sqrt(acc);
    }
  }
  return env;
}

}  // namespace stoi_detail

inline double stoi(const AudioSignal& clean, const AudioSignal& processed) {
  using namespace stoi_detail;
  if (clean.size() != processed.size()) {
    throw ShapeError("stoi: clean has " + std::to_string(clean.size()) + " samples, processed " +
                     std::to_string(processed.size()));
  }
  auto x = resample(clean.samples, clean.sample_rate, kRate);
  auto y = resample(processed.samples, processed.sample_rate, kRate);
  remove_silent_frames(x, y);
  static const auto obm = third_octave_matrix();
  const auto xe = band_envelopes(x, obm);
  const auto ye = band_envelopes(y, obm);
  const std::size_t frames = xe.front().size();
  if (frames < kSegment) {
    throw ValueError("stoi: only " + std::to_string(frames) + " frames remain after silence removal, need " +
                     std::to_string(kSegment));
  }
  const double clip = std::pow(10.0, -kBeta / 20.0);
  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> xs(kSegment), ys(kSegment);
  for (std::size_t m = kSegment; m <= frames; ++m) {
    for (std::size_t b = 0; b < kBands; ++b) {
      double nx = 0.0, ny = 0.0;
      for (std::size_t j = 0; j < kSegment; ++j) {
        xs[j] = xe[b][m - kSegment + j];
        ys[j] = ye[b][m - kSegment + j];
        nx += xs[j] * xs[j];
        ny += ys[j] * ys[j];
      }
      const double alpha = std::sqrt(nx) / (std::sqrt(ny) + kEps);
      double mx = 0.0, my = 0.0;
      for (std::size_t j = 0; j < kSegment; ++j) {
        ys[j] = std::min(ys[j] * alpha, xs[j] * (1.0 + clip));
        mx += xs[j];
        my += ys[j];
      }
      mx /= kSegment;
      my /= kSegment;
      double sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (std::size_t j = 0; j < kSegment; ++j) {
        const double a = xs[j] - mx, c = ys[j] - my;
        sxx += a * a;
        syy += c * c;
        sxy += a * c;
      }
      total += sxy / ((std::sqrt(sxx) + kEps) * (std::sqrt(syy) + kEps));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace lbkd
