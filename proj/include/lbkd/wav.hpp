#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "lbkd/dsp.hpp"
#include "lbkd/error.hpp"

namespace lbkd {

// Windowed-sinc resampler with 32 zero crossings of the low-pass kernel on
// each side (64 taps at unit ratio) and a Blackman window. Output length is
// ceil(len * to / from).
inline std::vector<double> resample(std::span<const double> x, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw ValueError("resample: sample rates must be positive");
  if (from_rate == to_rate) return {x.begin(), x.end()};
  constexpr double kZeroCrossings = 32.0;
  const double ratio = static_cast<double>(to_rate) / from_rate;
  const double cutoff = std::min(1.0, ratio);  // relative to the input Nyquist
  const double half_width = kZeroCrossings / cutoff;
  const auto out_len = static_cast<std::size_t>(
      (static_cast<std::uint64_t>(x.size()) * static_cast<std::uint64_t>(to_rate) +
       static_cast<std::uint64_t>(from_rate) - 1) /
      static_cast<std::uint64_t>(from_rate));
  std::vector<double> y(out_len, 0.0);
  for (std::size_t m = 0; m < out_len; ++m) {
    const double center = static_cast<double>(m) * from_rate / to_rate;
    const auto lo = static_cast<long long>(std::ceil(center - half_width));
    const auto hi = static_cast<long long>(std::floor(center + half_width));
    double acc = 0.0;
    for (long long n = std::max(lo, 0LL); n <= hi && n < static_cast<long long>(x.size()); ++n) {
      const double d = static_cast<double>(n) - center;
      const double arg = cutoff * d;
      const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      const double u = (d / half_width + 1.0) * 0.5;  // 0..1 across the window
      const double win = 0.42 - 0.5 * std::cos(2.0 * std::numbers::pi * u) +
                         0.08 * std::cos(4.0 * std::numbers::pi * u);
      acc += x[static_cast<std::size_t>(n)] * cutoff * sinc * win;
    }
    y[m] = acc;
  }
  return y;
}

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

// Reads a 16-bit PCM mono RIFF/WAVE file. Other rates are resampled to
// `target_rate`; multi-channel files are rejected.
inline AudioSignal load_wav(const std::filesystem::path& path, int target_rate = kSampleRate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open WAV file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& why) {
    return FormatError("malformed WAV file " + path.string() + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw fail("missing RIFF/WAVE header");
  }
  std::size_t pos = 12;
  int rate = 0, channels = 0, bits = 0;
  bool have_fmt = false;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = detail::read_u32(chunk + 4);
    if (pos + 8 + len > bytes.size()) throw fail("chunk extends past end of file");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) throw fail("fmt chunk too short");
      const std::uint16_t format = detail::read_u16(chunk + 8);
      channels = detail::read_u16(chunk + 10);
      rate = static_cast<int>(detail::read_u32(chunk + 12));
      bits = detail::read_u16(chunk + 22);
      if (format != 1) throw FormatError("unsupported WAV codec " + std::to_string(format) + " in " + path.string() + " (PCM only)");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      pcm = chunk + 8;
      pcm_bytes = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (!have_fmt || pcm == nullptr) throw fail("missing fmt or data chunk");
  if (channels != 1) throw FormatError("WAV file " + path.string() + " has " + std::to_string(channels) + " channels; mono required");
  if (bits != 16) throw FormatError("unsupported WAV sample width " + std::to_string(bits) + " bits in " + path.string());
  if (rate <= 0) throw fail("invalid sample rate");

  std::vector<double> samples(pcm_bytes / 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto v = static_cast<std::int16_t>(detail::read_u16(pcm + 2 * i));
    samples[i] = static_cast<double>(v) / 32768.0;
  }
  if (rate != target_rate) samples = resample(samples, rate, target_rate);
  return {std::move(samples), target_rate};
}

// Writes 16-bit PCM mono; samples are clipped to [-1, 1 - 2^-15].
inline void save_wav(const AudioSignal& signal, const std::filesystem::path& path) {
  std::string out;
  const auto data_bytes = static_cast<std::uint32_t>(signal.size() * 2);
  out += "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, 1);
  detail::put_u16(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(signal.sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(signal.sample_rate) * 2);
  detail::put_u16(out, 2);
  detail::put_u16(out, 16);
  out += "data";
  detail::put_u32(out, data_bytes);
  for (double v : signal.samples) {
    const double q = std::nearbyint(std::clamp(v, -1.0, 1.0) * 32768.0);
    detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0))));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write WAV file " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace lbkd
