#include <gtest/gtest.h>

#include <complex>
#include <numbers>

#include "lbkd/dsp.hpp"
#include "lbkd/random.hpp"

using namespace lbkd;

namespace {

AudioSignal noise_signal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  AudioSignal s{std::vector<double>(n), kSampleRate};
  for (auto& v : s.samples) v = 0.3 * rng.normal();
  return s;
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    n += a[i] * a[i];
  }
  return std::sqrt(d / n);
}

}  // namespace

TEST(Fft, MatchesDirectDft) {
  const std::size_t n = 64;
  Rng rng(5);
  std::vector<std::complex<double>> x(n);
  for (auto& v : x) v = {rng.normal(), rng.normal()};
  auto y = x;
  Fft(n).transform(y);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t t = 0; t < n; ++t)
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n));
    EXPECT_NEAR(std::abs(acc - y[k]), 0.0, 1e-10);
  }
}

TEST(Hann, IsPeriodic) {
  const auto w = hann_window(8);
  EXPECT_EQ(w[0], 0.0);
  EXPECT_NEAR(w[4], 1.0, 1e-15);
  EXPECT_NEAR(w[1], w[7], 1e-15);
}

TEST(Stft, TwoSecondsGive126By256) {
  const auto spec = stft(noise_signal(32000, 1));
  EXPECT_EQ(spec.frames, 126u);
  const auto mag = spec.magnitude();
  EXPECT_EQ(mag.frames, 126u);
  EXPECT_EQ(mag.bins, 256u);
}

// Reference values from numpy: rfft of the periodic-Hann-windowed frames of
// the reflect-padded signal (pad 256, hop 256).
TEST(Stft, MatchesNumpyReference) {
  AudioSignal s{std::vector<double>(2048), kSampleRate};
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double n = static_cast<double>(i);
    s.samples[i] = std::sin(2 * std::numbers::pi * 440 * n / 16000) +
                   0.5 * std::cos(2 * std::numbers::pi * 3000 * n / 16000 + 0.3);
  }
  const auto spec = stft(s);
  struct Ref {
    std::size_t t, k;
    double re, im;
  };
  const Ref refs[] = {{0, 0, 11.38268752270794, 0.0},       {0, 14, 12.192721012531237, 0.0},
                      {0, 96, 60.825451151671814, 0.0},     {0, 256, 0.01212290157945528, 0.0},
                      {3, 14, 87.26064726274114, -92.9238192741667}, {3, 96, 61.14154274789785, 18.913274402050718},
                      {8, 0, 2.478918978064206, 0.0},       {8, 14, 123.81570915760759, 21.341068536211836},
                      {8, 96, 15.226027860835199, 37.76434659132778}, {8, 256, -0.23423134202911333, 0.0}};
  for (const auto& r : refs) {
    EXPECT_NEAR(spec.at(r.t, r.k).real(), r.re, 1e-9) << r.t << "," << r.k;
    EXPECT_NEAR(spec.at(r.t, r.k).imag(), r.im, 1e-9) << r.t << "," << r.k;
  }
}

TEST(Stft, RoundTripIsExact) {
  for (std::size_t n : {32000u, 20000u, 4096u}) {
    const auto x = noise_signal(n, n);
    const auto spec = stft(x);
    const auto mag = spec.magnitude(spec.bins());
    const auto y = istft(mag, spec.phase(), spec.config, n);
    ASSERT_EQ(y.size(), n);
    EXPECT_LE(rel_l2(x.samples, y.samples), 1e-6) << n;
  }
}

TEST(Stft, DroppingNyquistChangesLittle) {
  const auto x = noise_signal(32000, 9);
  const auto spec = stft(x);
  const auto y = istft(spec.magnitude(), spec.phase(), spec.config, x.size());
  EXPECT_LE(rel_l2(x.samples, y.samples), 0.1);
}

TEST(Stft, ShortSignalIsRejected) {
  EXPECT_THROW(stft(noise_signal(100, 1)), ValueError);
}

TEST(Stft, MismatchedPhaseIsShapeError) {
  const auto spec = stft(noise_signal(4096, 2));
  auto phase = spec.phase();
  phase.frames -= 1;
  EXPECT_THROW(istft(spec.magnitude(), phase, spec.config), ShapeError);
}

TEST(Stft, TensorIstftMatchesNumericIstft) {
  const auto x = noise_signal(4096, 3);
  const auto spec = stft(x);
  const auto mag = spec.magnitude();
  const auto phase = std::make_shared<const PhaseGrid>(spec.phase());
  const Tensor y = istft(to_tensor(mag), phase, spec.config, x.size());
  const auto ref = istft(mag, *phase, spec.config, x.size());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_EQ(y[i], ref.samples[i]);
}
