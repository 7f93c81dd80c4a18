#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "lbkd/random.hpp"
#include "lbkd/wav.hpp"
#include "test_util.hpp"

using namespace lbkd;

namespace {

// Minimal RIFF writer independent of save_wav.
void write_raw_wav(const std::filesystem::path& p, int rate, int channels, int bits, int format,
                   const std::vector<std::int16_t>& samples) {
  std::string s = "RIFF";
  auto u32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff)); };
  auto u16 = [&](std::uint16_t v) { for (int i = 0; i < 2; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff)); };
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  u32(36 + data_bytes);
  s += "WAVEfmt ";
  u32(16);
  u16(static_cast<std::uint16_t>(format));
  u16(static_cast<std::uint16_t>(channels));
  u32(static_cast<std::uint32_t>(rate));
  u32(static_cast<std::uint32_t>(rate * channels * bits / 8));
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(static_cast<std::uint16_t>(bits));
  s += "data";
  u32(data_bytes);
  for (auto v : samples) u16(static_cast<std::uint16_t>(v));
  std::ofstream(p, std::ios::binary) << s;
}

}  // namespace

TEST(Wav, RoundTripWithinQuantization) {
  const auto dir = scratch_dir();
  Rng rng(1);
  AudioSignal x{std::vector<double>(5000), kSampleRate};
  for (auto& v : x.samples) v = rng.uniform(-0.99, 0.99);
  save_wav(x, dir / "a.wav");
  const auto y = load_wav(dir / "a.wav");
  ASSERT_EQ(y.size(), x.size());
  EXPECT_EQ(y.sample_rate, kSampleRate);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LE(std::abs(x.samples[i] - y.samples[i]), std::ldexp(1.0, -15));
}

TEST(Wav, SaveIsDeterministic) {
  const auto dir = scratch_dir();
  AudioSignal x{{0.1, -0.2, 0.3, 1.5, -1.5}, kSampleRate};
  save_wav(x, dir / "a.wav");
  save_wav(x, dir / "b.wav");
  EXPECT_EQ(slurp(dir / "a.wav"), slurp(dir / "b.wav"));
  const auto y = load_wav(dir / "a.wav");
  EXPECT_LE(y.samples[3], 1.0);
  EXPECT_GE(y.samples[4], -1.0);
}

TEST(Wav, EightKilohertzIsResampledToSixteen) {
  const auto dir = scratch_dir();
  std::vector<std::int16_t> pcm(8001);
  for (std::size_t i = 0; i < pcm.size(); ++i)
    pcm[i] = static_cast<std::int16_t>(8000 * std::sin(2 * std::numbers::pi * 300 * static_cast<double>(i) / 8000));
  write_raw_wav(dir / "n.wav", 8000, 1, 16, 1, pcm);
  const auto y = load_wav(dir / "n.wav");
  EXPECT_EQ(y.sample_rate, 16000);
  EXPECT_NEAR(static_cast<double>(y.size()), 2.0 * 8001, 1.0);
  // A 300 Hz tone survives: odd output samples interpolate the input.
  const double expect = 8000.0 / 32768.0 * std::sin(2 * std::numbers::pi * 300 * 4000.5 / 8000);
  EXPECT_NEAR(y.samples[8001], expect, 2e-3);
}

TEST(Wav, StereoIsRejected) {
  const auto dir = scratch_dir();
  write_raw_wav(dir / "s.wav", 16000, 2, 16, 1, std::vector<std::int16_t>(200));
  EXPECT_THROW(load_wav(dir / "s.wav"), FormatError);
}

TEST(Wav, NonPcmAndGarbageAreRejected) {
  const auto dir = scratch_dir();
  write_raw_wav(dir / "f.wav", 16000, 1, 16, 3, std::vector<std::int16_t>(200));
  EXPECT_THROW(load_wav(dir / "f.wav"), FormatError);
  std::ofstream(dir / "g.wav") << "this is not a wav file at all";
  EXPECT_THROW(load_wav(dir / "g.wav"), FormatError);
  EXPECT_THROW(load_wav(dir / "missing.wav"), FormatError);
}

TEST(Resample, LengthArithmetic) {
  std::vector<double> x(441, 0.0);
  EXPECT_EQ(resample(x, 44100, 16000).size(), 160u);
  EXPECT_EQ(resample(std::vector<double>(442, 0.0), 44100, 16000).size(), 161u);
  EXPECT_EQ(resample(x, 16000, 16000).size(), 441u);
  EXPECT_THROW(resample(x, 0, 16000), ValueError);
}
