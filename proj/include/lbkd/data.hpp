#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"
#include "lbkd/dsp.hpp"
#include "lbkd/error.hpp"
#include "lbkd/random.hpp"
#include "lbkd/wav.hpp"

namespace lbkd {

inline constexpr double kSegmentSeconds = 2.0;
inline constexpr std::size_t kSegmentSamples = 32000;
// Segments whose RMS falls below this (full scale = 1) count as inactive.
inline constexpr double kActivityRms = 1e-4;
inline constexpr int kMinSnrDb = -5;
inline constexpr int kMaxSnrDb = 20;

inline double power(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

inline double peak(std::span<const double> x) {
  double p = 0.0;
  for (double v : x) p = std::max(p, std::abs(v));
  return p;
}

inline void normalize_peak(std::vector<double>& x, double target = 1.0) {
  const double p = peak(x);
  if (p > 0.0)
    for (auto& v : x) v *= target / p;
}

// --- Synthetic material ------------------------------------------------------

// Harmonic stack on a slowly varying pitch contour, shaped by three moving
// formant resonances and a syllabic on/off envelope, plus a little breath
// noise. Peak-normalized; deterministic per seed.
inline AudioSignal synth_speechlike(std::uint64_t seed, double seconds = kSegmentSeconds,
                                    int sample_rate = kSampleRate) {
  Rng rng(derive_seed({seed, 0x73706565ULL}));
  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  const double fs = sample_rate;
  const double f0_base = rng.uniform(90.0, 220.0);
  const double vib_rate = rng.uniform(0.4, 1.8), vib_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double jit_rate = rng.uniform(2.0, 5.0);

  // Syllables: [start, end) in samples with formant targets.
  struct Syllable {
    std::size_t start, end;
    double f1, f2, f3;
  };
  std::vector<Syllable> syllables;
  double t = rng.uniform(0.0, 0.08);
  while (t < seconds) {
    const double dur = rng.uniform(0.12, 0.35);
    const auto s = static_cast<std::size_t>(t * fs);
    const auto e = std::min(n, static_cast<std::size_t>((t + dur) * fs));
    if (s < e) {
      syllables.push_back({s, e, rng.uniform(300.0, 850.0), rng.uniform(900.0, 2300.0),
                           rng.uniform(2300.0, 3300.0)});
    }
    t += dur + rng.uniform(0.03, 0.15);
  }

  std::vector<double> out(n, 0.0);
  constexpr std::size_t kMaxHarmonics = 60;
  std::vector<double> phases(kMaxHarmonics, 0.0);
  for (auto& p : phases) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<double> gains(kMaxHarmonics, 0.0);
  std::size_t current = 0;
  double f0 = f0_base;
  for (std::size_t i = 0; i < n; ++i) {
    while (current < syllables.size() && syllables[current].end <= i) ++current;
    const double time = static_cast<double>(i) / fs;
    f0 = f0_base * (1.0 + 0.12 * std::sin(2.0 * std::numbers::pi * vib_rate * time + vib_phase) +
                    0.03 * std::sin(2.0 * std::numbers::pi * jit_rate * time));
    double env = 0.0;
    const Syllable* syl = nullptr;
    if (current < syllables.size() && syllables[current].start <= i) {
      syl = &syllables[current];
      const double u = static_cast<double>(i - syl->start) / static_cast<double>(syl->end - syl->start);
      env = std::pow(std::sin(std::numbers::pi * u), 0.6);
    }
    // Formant weights are refreshed every 64 samples.
    if (i % 64 == 0 && syl) {
      const double u = static_cast<double>(i - syl->start) / static_cast<double>(syl->end - syl->start);
      const double glide = 1.0 + 0.15 * (u - 0.5);
      const double formants[3] = {syl->f1 * glide, syl->f2 / glide, syl->f3};
      const double widths[3] = {90.0, 140.0, 200.0};
      const double weights[3] = {1.0, 0.6, 0.3};
      for (std::size_t h = 0; h < kMaxHarmonics; ++h) {
        const double fh = f0 * static_cast<double>(h + 1);
        double g = 0.0;
        if (fh < 0.45 * fs) {
          for (int k = 0; k < 3; ++k) {
            const double d = (fh - formants[k]) / widths[k];
            g += weights[k] / (1.0 + d * d);
          }
          g *= 1.0 / std::sqrt(static_cast<double>(h + 1));
        }
        gains[h] = g;
      }
    }
    double v = 0.0;
    if (env > 0.0) {
      for (std::size_t h = 0; h < kMaxHarmonics; ++h) {
        phases[h] += 2.0 * std::numbers::pi * f0 * static_cast<double>(h + 1) / fs;
        if (gains[h] > 0.0) v += gains[h] * std::sin(phases[h]);
      }
      v = env * (v + 0.02 * rng.normal());
    }
    out[i] = v;
  }
  normalize_peak(out);
  return {std::move(out), sample_rate};
}

enum class NoiseKind { white, pink, babble };

inline NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "white") return NoiseKind::white;
  if (s == "pink") return NoiseKind::pink;
  if (s == "babble") return NoiseKind::babble;
  throw ConfigError("noise kind: unknown value '" + s + "' (white, pink, babble)");
}

inline std::string to_string(NoiseKind k) {
  return k == NoiseKind::white ? "white" : k == NoiseKind::pink ? "pink" : "babble";
}

inline AudioSignal synth_noise(NoiseKind kind, std::uint64_t seed, double seconds = kSegmentSeconds,
                               int sample_rate = kSampleRate) {
  Rng rng(derive_seed({seed, 0x6e6f6973ULL, static_cast<std::uint64_t>(kind)}));
  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  std::vector<double> out(n, 0.0);
  switch (kind) {
    case NoiseKind::white:
      for (auto& v : out) v = rng.normal();
      break;
    case NoiseKind::pink: {
      // Paul Kellet's refined pink filter.
      double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
      for (auto& v : out) {
        const double w = rng.normal();
        b0 = 0.99886 * b0 + w * 0.0555179;
        b1 = 0.99332 * b1 + w * 0.0750759;
        b2 = 0.96900 * b2 + w * 0.1538520;
        b3 = 0.86650 * b3 + w * 0.3104856;
        b4 = 0.55000 * b4 + w * 0.5329522;
        b5 = -0.7616 * b5 - w * 0.0168980;
        v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
        b6 = w * 0.115926;
      }
      break;
    }
    case NoiseKind::babble: {
      constexpr int kTalkers = 5;
      for (int k = 0; k < kTalkers; ++k) {
        const auto talker = synth_speechlike(derive_seed({seed, 0x626162ULL, static_cast<std::uint64_t>(k)}),
                                             seconds, sample_rate);
        const auto shift = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
        for (std::size_t i = 0; i < n; ++i) out[i] += talker.samples[(i + shift) % n];
      }
      break;
    }
  }
  normalize_peak(out);
  return {std::move(out), sample_rate};
}

// --- Segmentation and mixing -------------------------------------------------

// Consecutive non-overlapping 2-second segments; a trailing remainder and
// inactive segments are dropped.
inline std::vector<AudioSignal> segment(const AudioSignal& signal, std::size_t length = kSegmentSamples,
                                        double activity_rms = kActivityRms) {
  std::vector<AudioSignal> out;
  for (std::size_t start = 0; start + length <= signal.size(); start += length) {
    std::vector<double> seg(signal.samples.begin() + static_cast<std::ptrdiff_t>(start),
                            signal.samples.begin() + static_cast<std::ptrdiff_t>(start + length));
    if (std::sqrt(power(seg)) >= activity_rms) out.push_back({std::move(seg), signal.sample_rate});
  }
  return out;
}

struct MixExample {
  std::string id;
  AudioSignal clean;
  AudioSignal noisy;
  int snr_db = 0;
  double scale = 1.0;  // joint factor applied to clean and noisy
};

// Scales the noise to the requested SNR against the clean signal, adds them,
// and then scales both signals by the same factor if the mixture peak
// exceeds 1 (bringing it to exactly 1).
inline MixExample mix_at_snr(const AudioSignal& clean, const AudioSignal& noise, int snr_db) {
  if (clean.size() != noise.size()) {
    throw ShapeError("mix_at_snr: clean has " + std::to_string(clean.size()) + " samples, noise " +
                     std::to_string(noise.size()));
  }
  const double pc = power(clean.samples), pn = power(noise.samples);
  if (pc <= 0.0) throw ValueError("mix_at_snr: clean signal has zero power");
  if (pn <= 0.0) throw ValueError("mix_at_snr: noise signal has zero power");
  const double gain = std::sqrt(pc / (pn * std::pow(10.0, snr_db / 10.0)));
  MixExample ex;
  ex.snr_db = snr_db;
  ex.clean = clean;
  ex.noisy = clean;
  for (std::size_t i = 0; i < clean.size(); ++i) ex.noisy.samples[i] += gain * noise.samples[i];
  const double p = peak(ex.noisy.samples);
  if (p > 1.0) {
    ex.scale = 1.0 / p;
    for (auto& v : ex.noisy.samples) v *= ex.scale;
    for (auto& v : ex.clean.samples) v *= ex.scale;
  }
  return ex;
}

// --- Manifests ---------------------------------------------------------------

// Either a generator recipe ("speech", "white", "pink", "babble") or a WAV
// file path relative to the manifest.
struct SourceSpec {
  std::string id;
  std::string kind;
  std::uint64_t seed = 0;
  double seconds = kSegmentSeconds;
  std::string path;
};

struct SplitSources {
  std::vector<SourceSpec> speech;
  std::vector<SourceSpec> noise;
};

struct SplitManifest {
  std::uint64_t seed = 0;
  SplitSources train, validation, test;
  std::filesystem::path base_dir = ".";

  const SplitSources& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "validation") return validation;
    if (name == "test") return test;
    throw ConfigError("split: unknown split '" + name + "'");
  }
};

inline AudioSignal realize(const SourceSpec& src, const std::filesystem::path& base_dir) {
  if (src.kind == "wav") {
    const std::filesystem::path p(src.path);
    return load_wav(p.is_absolute() ? p : base_dir / p);
  }
  if (src.kind == "speech") return synth_speechlike(src.seed, src.seconds);
  return synth_noise(noise_kind_from_string(src.kind), src.seed, src.seconds);
}

inline nlohmann::json to_json(const SourceSpec& s) {
  if (s.kind == "wav") return {{"id", s.id}, {"wav", s.path}};
  return {{"id", s.id}, {"synth", s.kind}, {"seed", s.seed}, {"seconds", s.seconds}};
}

inline nlohmann::json manifest_to_json(const SplitManifest& m) {
  auto split = [](const SplitSources& s) {
    nlohmann::json sp = nlohmann::json::array(), no = nlohmann::json::array();
    for (const auto& x : s.speech) sp.push_back(to_json(x));
    for (const auto& x : s.noise) no.push_back(to_json(x));
    return nlohmann::json{{"speech", sp}, {"noise", no}};
  };
  return {{"format", "lbkd-manifest"},
          {"version", 1},
          {"seed", m.seed},
          {"splits", {{"train", split(m.train)}, {"validation", split(m.validation)}, {"test", split(m.test)}}}};
}

inline SplitManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  SplitManifest m;
  m.base_dir = base_dir;
  try {
    if (j.at("format").get<std::string>() != "lbkd-manifest") throw ConfigError("manifest.format: expected 'lbkd-manifest'");
    if (j.at("version").get<int>() != 1) throw ConfigError("manifest.version: unsupported version");
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const char* name : {"train", "validation", "test"}) {
      SplitSources& dst = name == std::string("train") ? m.train : name == std::string("validation") ? m.validation : m.test;
      const auto& sj = j.at("splits").at(name);
      for (const char* role : {"speech", "noise"}) {
        auto& list = role == std::string("speech") ? dst.speech : dst.noise;
        for (const auto& e : sj.at(role)) {
          SourceSpec s;
          s.id = e.at("id").get<std::string>();
          if (e.contains("wav")) {
            s.kind = "wav";
            s.path = e.at("wav").get<std::string>();
          } else {
            s.kind = e.at("synth").get<std::string>();
            if (s.kind != "speech") noise_kind_from_string(s.kind);
            s.seed = e.at("seed").get<std::uint64_t>();
            s.seconds = e.value("seconds", kSegmentSeconds);
          }
          list.push_back(std::move(s));
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline void write_manifest(const SplitManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("manifest: cannot write " + path.string());
  out << manifest_to_json(m).dump(2) << '\n';
}

inline SplitManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("manifest: cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest: " + path.string() + " is not valid JSON: " + e.what());
  }
  return manifest_from_json(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

// Sizes of a 60/20/20 split of n items, as close as rounding allows.
inline std::array<std::size_t, 3> split_counts(std::size_t n) {
  const auto train = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(n)));
  const auto val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
  return {train, val, n - train - val};
}

struct SyntheticCorpusSpec {
  std::size_t train_speech = 120, validation_speech = 40, test_speech = 40;
  std::size_t train_noise = 12, validation_noise = 4, test_noise = 4;
  double speech_seconds = kSegmentSeconds;
  double noise_seconds = 4.0;
};

// Disjoint generator seeds for every file; noise kinds cycle white, pink,
// babble.
inline SplitManifest synthetic_manifest(std::uint64_t seed, const SyntheticCorpusSpec& spec) {
  SplitManifest m;
  m.seed = seed;
  std::uint64_t counter = 0;
  auto fill = [&](SplitSources& s, const std::string& tag, std::size_t n_speech, std::size_t n_noise) {
    for (std::size_t i = 0; i < n_speech; ++i) {
      s.speech.push_back({tag + "_speech_" + std::to_string(i), "speech", derive_seed({seed, ++counter}),
                          spec.speech_seconds, ""});
    }
    static const char* kinds[] = {"white", "pink", "babble"};
    for (std::size_t i = 0; i < n_noise; ++i) {
      s.noise.push_back({tag + "_noise_" + std::to_string(i), kinds[i % 3], derive_seed({seed, ++counter}),
                         spec.noise_seconds, ""});
    }
  };
  fill(m.train, "train", spec.train_speech, spec.train_noise);
  fill(m.validation, "validation", spec.validation_speech, spec.validation_noise);
  fill(m.test, "test", spec.test_speech, spec.test_noise);
  return m;
}

// --- Loaded splits and the per-epoch sampler ---------------------------------

struct SplitData {
  std::string name;
  std::vector<AudioSignal> segments;  // clean, 2 s each
  std::vector<std::string> segment_ids;
  std::vector<AudioSignal> noises;
  std::vector<std::string> noise_ids;
};

inline SplitData load_split(const SplitManifest& m, const std::string& name) {
  const auto& src = m.split(name);
  SplitData d;
  d.name = name;
  for (const auto& s : src.speech) {
    const auto segs = segment(realize(s, m.base_dir));
    for (std::size_t k = 0; k < segs.size(); ++k) {
      d.segments.push_back(segs[k]);
      d.segment_ids.push_back(s.id + "#" + std::to_string(k));
    }
  }
  for (const auto& s : src.noise) {
    auto n = realize(s, m.base_dir);
    if (n.size() < kSegmentSamples) {
      // Short noise files are looped up to one segment.
      std::vector<double> looped(kSegmentSamples);
      for (std::size_t i = 0; i < looped.size(); ++i) looped[i] = n.samples[i % n.size()];
      n.samples = std::move(looped);
    }
    d.noises.push_back(std::move(n));
    d.noise_ids.push_back(s.id);
  }
  if (d.segments.empty()) throw ConfigError("split '" + name + "' has no active 2-second speech segments");
  if (d.noises.empty()) throw ConfigError("split '" + name + "' has no noise files");
  return d;
}

// Mixtures for one pass over a split. Every speech segment is paired with a
// noise file drawn from a shuffled, cycled pool (oversampled when there are
// fewer noise files than segments), a random 2-second window of it, and an
// integer SNR drawn uniformly from [-5, 20] dB. Example i depends only on
// (seed, split, epoch, i).
class EpochSampler {
 public:
  EpochSampler(const SplitData& data, std::uint64_t seed, std::uint64_t epoch)
      : data_(&data), seed_(seed), epoch_(epoch) {
    if (data.segments.empty() || data.noises.empty()) throw ConfigError("epoch_sampler: empty split '" + data.name + "'");
    Rng rng(derive_seed({seed, split_tag(), epoch, 0x706f6f6cULL}));
    std::vector<std::size_t> pool(data.noises.size());
    while (noise_for_.size() < data.segments.size()) {
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      rng.shuffle(pool);
      noise_for_.insert(noise_for_.end(), pool.begin(), pool.end());
    }
    noise_for_.resize(data.segments.size());
  }

  std::size_t size() const { return data_->segments.size(); }
  bool oversampled() const { return data_->noises.size() < data_->segments.size(); }
  std::size_t noise_index(std::size_t i) const { return noise_for_[i]; }

  MixExample operator()(std::size_t i) const {
    Rng rng(derive_seed({seed_, split_tag(), epoch_, static_cast<std::uint64_t>(i)}));
    const auto snr = static_cast<int>(rng.uniform_int(kMinSnrDb, kMaxSnrDb));
    const auto& noise = data_->noises[noise_for_[i]];
    const auto& clean = data_->segments[i];
    const std::size_t slack = noise.size() - clean.size();
    const auto offset = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(slack)));
    AudioSignal window{std::vector<double>(noise.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                                           noise.samples.begin() + static_cast<std::ptrdiff_t>(offset + clean.size())),
                       noise.sample_rate};
    auto ex = mix_at_snr(clean, window, snr);
    ex.id = data_->segment_ids[i] + "+" + data_->noise_ids[noise_for_[i]];
    return ex;
  }

 private:
  std::uint64_t split_tag() const {
    std::uint64_t h = 0;
    for (char c : data_->name) h = h * 131 + static_cast<unsigned char>(c);
    return h;
  }

  const SplitData* data_;
  std::uint64_t seed_;
  std::uint64_t epoch_;
  std::vector<std::size_t> noise_for_;
};

// The test split is mixed once: a fixed epoch index independent of training.
inline constexpr std::uint64_t kFrozenTestEpoch = 0xfffffffULL;
inline constexpr std::uint64_t kFrozenValidationEpoch = 0xffffffeULL;

inline std::vector<MixExample> frozen_test_set(const SplitData& test, std::uint64_t seed) {
  EpochSampler sampler(test, seed, kFrozenTestEpoch);
  std::vector<MixExample> out;
  out.reserve(sampler.size());
  for (std::size_t i = 0; i < sampler.size(); ++i) out.push_back(sampler(i));
  return out;
}

}  // namespace lbkd
