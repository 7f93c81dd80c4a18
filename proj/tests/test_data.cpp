#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "lbkd/data.hpp"
#include "lbkd/losses.hpp"
#include "test_util.hpp"

using namespace lbkd;

namespace {

double measured_snr(const MixExample& ex) {
  std::vector<double> n(ex.noisy.samples);
  for (std::size_t i = 0; i < n.size(); ++i) n[i] -= ex.clean.samples[i];
  return 10.0 * std::log10(power(ex.clean.samples) / power(n));
}

double diff_ratio(const std::vector<double>& x) {
  double d = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) d += (x[i] - x[i - 1]) * (x[i] - x[i - 1]);
  return d / (power(x) * static_cast<double>(x.size()));
}

SplitData small_split(const std::string& name, std::size_t speech, std::size_t noise, std::uint64_t seed = 3) {
  SyntheticCorpusSpec spec{speech, speech, speech, noise, noise, noise, 2.0, 2.5};
  return load_split(synthetic_manifest(seed, spec), name);
}

}  // namespace

TEST(Segment, KeepsWholeActiveSegments) {
  EXPECT_EQ(segment(synth_speechlike(1, 5.0)).size(), 2u);
  EXPECT_EQ(segment(synth_speechlike(1, 1.5)).size(), 0u);
  EXPECT_EQ(segment(AudioSignal{std::vector<double>(64000, 0.0), kSampleRate}).size(), 0u);
  AudioSignal half{std::vector<double>(64000, 0.0), kSampleRate};
  for (std::size_t i = 32000; i < 64000; ++i) half.samples[i] = (i % 2 ? 0.01 : -0.01);
  const auto segs = segment(half);
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0].samples.front(), -0.01);
}

TEST(Synth, DeterministicAndPeakNormalized) {
  const auto a = synth_speechlike(42), b = synth_speechlike(42), c = synth_speechlike(43);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
  EXPECT_EQ(a.size(), kSegmentSamples);
  EXPECT_NEAR(peak(a.samples), 1.0, 1e-12);
  for (auto k : {NoiseKind::white, NoiseKind::pink, NoiseKind::babble}) {
    const auto n = synth_noise(k, 9, 1.0);
    EXPECT_EQ(n.samples, synth_noise(k, 9, 1.0).samples);
    EXPECT_NEAR(peak(n.samples), 1.0, 1e-12);
    EXPECT_EQ(noise_kind_from_string(to_string(k)), k);
  }
  EXPECT_THROW(noise_kind_from_string("brown"), ConfigError);
}

TEST(Synth, PinkNoiseIsDarkerThanWhite) {
  const auto w = synth_noise(NoiseKind::white, 5, 2.0), p = synth_noise(NoiseKind::pink, 5, 2.0);
  EXPECT_NEAR(diff_ratio(w.samples), 2.0, 0.1);
  EXPECT_LT(diff_ratio(p.samples), 0.5 * diff_ratio(w.samples));
}

TEST(Mix, SnrIsExactForEveryIntegerLevel) {
  const auto clean = synth_speechlike(3), noise = synth_noise(NoiseKind::babble, 4, 2.0);
  for (int snr = kMinSnrDb; snr <= kMaxSnrDb; ++snr) {
    const auto ex = mix_at_snr(clean, noise, snr);
    EXPECT_NEAR(measured_snr(ex), snr, 1e-6) << snr;
    EXPECT_LE(peak(ex.noisy.samples), 1.0 + 1e-12);
    EXPECT_EQ(ex.snr_db, snr);
  }
}

TEST(Mix, PeakScalingIsJoint) {
  const auto clean = synth_speechlike(3), noise = synth_noise(NoiseKind::white, 4, 2.0);
  const auto ex = mix_at_snr(clean, noise, -5);
  ASSERT_LT(ex.scale, 1.0);
  EXPECT_NEAR(peak(ex.noisy.samples), 1.0, 1e-12);
  for (std::size_t i = 0; i < clean.size(); i += 997) EXPECT_DOUBLE_EQ(ex.clean.samples[i], clean.samples[i] * ex.scale);
}

TEST(Mix, WhiteNoiseSiSnrTracksMixingSnr) {
  const auto clean = synth_speechlike(8), noise = synth_noise(NoiseKind::white, 9, 2.0);
  for (int snr : {-5, 0, 10, 20}) {
    const auto ex = mix_at_snr(clean, noise, snr);
    EXPECT_NEAR(si_snr(ex.clean.samples, ex.noisy.samples), snr, 0.5) << snr;
  }
}

TEST(Mix, Errors) {
  const auto clean = synth_speechlike(3);
  EXPECT_THROW(mix_at_snr(clean, synth_noise(NoiseKind::white, 1, 1.0), 0), ShapeError);
  EXPECT_THROW(mix_at_snr(clean, AudioSignal{std::vector<double>(clean.size(), 0.0), kSampleRate}, 0), ValueError);
}

TEST(Manifest, JsonRoundTripAndWavEntries) {
  const auto dir = scratch_dir();
  auto m = synthetic_manifest(11, {3, 1, 1, 2, 1, 1, 2.0, 4.0});
  m.train.noise.push_back({"rec", "wav", 0, 0.0, "noise/rec.wav"});
  write_manifest(m, dir / "m.json");
  const auto back = read_manifest(dir / "m.json");
  EXPECT_EQ(manifest_to_json(back), manifest_to_json(m));
  EXPECT_EQ(back.base_dir, dir);
  EXPECT_EQ(back.train.noise.back().kind, "wav");
  EXPECT_EQ(back.train.noise[1].kind, "pink");
}

TEST(Manifest, ErrorsNameTheProblem) {
  const auto dir = scratch_dir();
  try {
    read_manifest(dir / "absent.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("absent.json"), std::string::npos);
  }
  std::ofstream(dir / "bad.json") << R"({"format": "lbkd-manifest", "version": 2})";
  EXPECT_THROW(read_manifest(dir / "bad.json"), ConfigError);
  std::ofstream(dir / "kind.json")
      << R"({"format": "lbkd-manifest", "version": 1, "seed": 1, "splits": {"train": {"speech": [],
           "noise": [{"id": "x", "synth": "brown", "seed": 1}]}, "validation": {"speech": [], "noise": []},
           "test": {"speech": [], "noise": []}}})";
  EXPECT_THROW(read_manifest(dir / "kind.json"), ConfigError);
}

TEST(Manifest, SplitCountsAndDisjointSeeds) {
  EXPECT_EQ(split_counts(200), (std::array<std::size_t, 3>{120, 40, 40}));
  EXPECT_EQ(split_counts(7), (std::array<std::size_t, 3>{4, 1, 2}));
  const auto m = synthetic_manifest(1, {});
  std::set<std::uint64_t> seeds;
  std::size_t n = 0;
  for (const auto* s : {&m.train, &m.validation, &m.test}) {
    for (const auto& x : s->speech) seeds.insert(x.seed), ++n;
    for (const auto& x : s->noise) seeds.insert(x.seed), ++n;
  }
  EXPECT_EQ(seeds.size(), n);
}

TEST(LoadSplit, LoopsShortNoiseAndRejectsEmpty) {
  SyntheticCorpusSpec spec{2, 1, 1, 1, 1, 1, 2.0, 0.5};
  const auto d = load_split(synthetic_manifest(2, spec), "train");
  EXPECT_EQ(d.segments.size(), 2u);
  EXPECT_EQ(d.noises[0].size(), kSegmentSamples);
  EXPECT_EQ(d.noises[0].samples[8000], d.noises[0].samples[0]);
  SyntheticCorpusSpec empty{0, 1, 1, 1, 1, 1, 2.0, 2.0};
  EXPECT_THROW(load_split(synthetic_manifest(2, empty), "train"), ConfigError);
}

TEST(EpochSampler, DeterministicPerEpoch) {
  const auto d = small_split("train", 6, 2);
  EpochSampler a(d, 5, 0), b(d, 5, 0), c(d, 5, 1);
  bool any_difference = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a(i), y = b(i), z = c(i);
    EXPECT_EQ(x.noisy.samples, y.noisy.samples);
    EXPECT_EQ(x.id, y.id);
    any_difference |= x.snr_db != z.snr_db || x.noisy.samples != z.noisy.samples;
    EXPECT_GE(x.snr_db, kMinSnrDb);
    EXPECT_LE(x.snr_db, kMaxSnrDb);
  }
  EXPECT_TRUE(any_difference);
}

TEST(EpochSampler, OversamplesNoiseEvenly) {
  const auto d = small_split("train", 7, 3);
  EpochSampler s(d, 1, 0);
  EXPECT_TRUE(s.oversampled());
  std::vector<int> uses(3, 0);
  for (std::size_t i = 0; i < s.size(); ++i) ++uses[s.noise_index(i)];
  for (int u : uses) {
    EXPECT_GE(u, 2);
    EXPECT_LE(u, 3);
  }
}

TEST(EpochSampler, SnrCoversTheRange) {
  const auto d = small_split("train", 1, 1);
  std::set<int> seen;
  for (std::uint64_t e = 0; e < 400; ++e) seen.insert(EpochSampler(d, 1, e)(0).snr_db);
  EXPECT_EQ(seen.size(), static_cast<std::size_t>(kMaxSnrDb - kMinSnrDb + 1));
}

TEST(FrozenTestSet, IndependentOfCallOrder) {
  const auto d = small_split("test", 3, 2);
  const auto a = frozen_test_set(d, 9);
  EpochSampler(d, 9, 0)(0);
  const auto b = frozen_test_set(d, 9);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].noisy.samples, b[i].noisy.samples);
}
