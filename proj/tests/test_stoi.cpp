#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "lbkd/stoi.hpp"

using namespace lbkd;

namespace {

// Test signals shared with the Python reference: a modulated two-tone with a
// 200 ms gap, plus scaled LCG noise.
std::pair<AudioSignal, AudioSignal> oracle_pair(int fs, std::size_t n, double amp) {
  std::vector<double> clean(n), proc(n);
  std::uint64_t x = 12345;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    double c = (0.6 * std::sin(2 * std::numbers::pi * 220 * t) + 0.3 * std::sin(2 * std::numbers::pi * 1250 * t)) *
               (0.55 + 0.45 * std::sin(2 * std::numbers::pi * 3 * t));
    if (i >= static_cast<std::size_t>(0.8 * fs) && i < static_cast<std::size_t>(1.0 * fs)) c = 0.0;
    x = (1103515245ULL * x + 12345ULL) % (1ULL << 31);
    clean[i] = c;
    proc[i] = c + amp * (static_cast<double>(x) / static_cast<double>(1ULL << 31) - 0.5);
  }
  return {AudioSignal{clean, fs}, AudioSignal{proc, fs}};
}

}  // namespace

TEST(Stoi, MatchesReferenceAtNativeRate) {
  const std::pair<double, double> cases[] = {
      {0.05, 0.5455311383027118}, {0.3, 0.4371097269262617}, {1.0, 0.3626733255537656}};
  for (auto [amp, expected] : cases) {
    const auto [c, p] = oracle_pair(10000, 25000, amp);
    EXPECT_NEAR(stoi(c, p), expected, 1e-9) << amp;
  }
}

TEST(Stoi, MatchesReferenceAfterResampling) {
  // The reference uses a different resampling filter; agreement is to ~1e-3.
  const std::pair<double, double> cases[] = {
      {0.05, 0.5386172448412789}, {0.3, 0.4191269750025126}, {1.0, 0.3507289703705223}};
  for (auto [amp, expected] : cases) {
    const auto [c, p] = oracle_pair(16000, 40000, amp);
    EXPECT_NEAR(stoi(c, p), expected, 2e-3) << amp;
  }
}

TEST(Stoi, IdenticalSignalsScoreOne) {
  const auto [c, p] = oracle_pair(16000, 40000, 0.3);
  EXPECT_NEAR(stoi(p, p), 1.0, 1e-9);
  (void)c;
}

TEST(Stoi, MonotoneInNoise) {
  double prev = 2.0;
  for (double amp : {0.01, 0.1, 0.5, 2.0}) {
    const auto [c, p] = oracle_pair(16000, 40000, amp);
    const double s = stoi(c, p);
    EXPECT_LT(s, prev);
    prev = s;
  }
}

TEST(Stoi, Errors) {
  const auto [c, p] = oracle_pair(16000, 4000, 0.1);
  EXPECT_THROW(stoi(c, p), ValueError);
  AudioSignal shorter = p;
  shorter.samples.pop_back();
  EXPECT_THROW(stoi(c, shorter), ShapeError);
}
