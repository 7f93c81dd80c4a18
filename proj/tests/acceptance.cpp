// Acceptance run: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Exit status is nonzero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lbkd/lbkd.hpp"

using namespace lbkd;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void verdict(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void note(const std::string& s) {
  std::fprintf(stderr, "  %s\n", s.c_str());
  std::fflush(stderr);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_tensor(const Shape& s, Rng& rng) {
  std::vector<double> v(numel(s));
  for (auto& x : v) x = rng.normal();
  return Tensor(s, v);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(LBKD_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// --- Criteria ------------------------------------------------------------------

void gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  double worst_op = 0.0, worst_e2e = 0.0;
  std::vector<GradcheckResult> results;
  for (const auto& c : gradcheck_suite(0)) {
    results.push_back(gradcheck(c));
    ok = ok && results.back().pass();
    (c.tolerance > 1e-4 ? worst_e2e : worst_op) = std::max(c.tolerance > 1e-4 ? worst_e2e : worst_op,
                                                            results.back().max_rel_error);
  }
  const double secs = seconds_since(t0);
  std::fputs(format_gradcheck(results).c_str(), stderr);
  verdict("gradient suite", ok && secs < 300.0,
          fmt("%zu cases, ops max rel err %.2e (<= 1e-4), end-to-end %.2e (<= 1e-3), %.1f s (< 300 s)",
              results.size(), worst_op, worst_e2e, secs));
}

void shape_oracle() {
  NoGradGuard guard;
  Rng rng(1);
  const Tensor input = random_tensor({126, 256}, rng);
  struct Expect {
    const char* name;
    LatentShape shape;
  };
  bool ok = true;
  std::string detail;
  std::vector<Tensor> latents;
  std::vector<UNetModel> models;
  for (const auto& e : {Expect{"t1", {128, 126, 5}}, Expect{"t2", {128, 126, 17}}, Expect{"s1", {32, 126, 5}},
                        Expect{"s2", {32, 2, 5}}}) {
    models.emplace_back(preset(e.name), 0);
    const auto out = models.back().forward(input);
    const bool match = out.latent.shape() == e.shape.shape() && out.mask.shape() == Shape{126, 256};
    ok = ok && match;
    detail += std::string(e.name) + " " + to_string(out.latent.shape()) + (match ? "" : " MISMATCH") + ", ";
    latents.push_back(out.latent);
  }
  struct Scenario {
    const char* name;
    std::size_t teacher, student;
  };
  for (const auto& s : {Scenario{"t1s1", 0, 2}, Scenario{"t1s2", 0, 3}, Scenario{"t2s2", 1, 3}}) {
    const auto adapter = scenario_adapter(models[s.teacher], models[s.student], s.name, 0);
    const auto y = adapter.forward(latents[s.teacher]);
    const bool match = y.shape() == latents[s.student].shape();
    ok = ok && match;
    detail += std::string(s.name) + " " + axes_label(adapter.axes()) + " -> " + to_string(y.shape()) +
              (match ? "" : " MISMATCH") + (std::string(s.name) == "t2s2" ? "" : ", ");
  }
  verdict("shape oracle", ok, detail);
}

void accounting() {
  const UNetModel t1(preset("t1"), 0), t2(preset("t2"), 0), s1(preset("s1"), 0), s2(preset("s2"), 0);
  const double p_t1 = static_cast<double>(count_params(t1)), p_t2 = static_cast<double>(count_params(t2));
  const double p_s1 = static_cast<double>(count_params(s1)), p_s2 = static_cast<double>(count_params(s2));
  auto within = [](double v, double ref) { return std::abs(v - ref) <= 0.15 * ref; };
  const double m_t1 = count_mops(t1), m_t2 = count_mops(t2), m_s1 = count_mops(s1), m_s2 = count_mops(s2);
  const bool ok = within(p_t1, 1.35e6) && within(p_t2, 2.04e6) && within(p_s1, 37e3) && within(p_s2, 37e3) &&
                  count_params(s1) == count_params(s2) && m_s2 < m_s1 && m_s1 < m_t1 && m_t1 < m_t2;
  verdict("accounting", ok,
          fmt("params t1 %.0f (%.1f%%), t2 %.0f (%.1f%%), s1 %.0f (%.1f%%), s2 %.0f; MOps s2 %.2f < s1 %.2f < "
              "t1 %.1f < t2 %.1f",
              p_t1, 100 * (p_t1 / 1.35e6 - 1), p_t2, 100 * (p_t2 / 2.04e6 - 1), p_s1, 100 * (p_s1 / 37e3 - 1), p_s2,
              m_s2, m_s1, m_t1, m_t2));
}

void loss_invariances() {
  Rng rng(2);
  double cos_scale = 0.0, cos_self = 0.0, cos_opp = 0.0, snr_scale = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor a = random_tensor({32, 126, 5}, rng), b = random_tensor({32, 126, 5}, rng);
    const double d = cosine_distance(a, b).item();
    for (double k : {1e-6, 1e-3, 0.37, 2.0, 1e3, 1e6}) {
      cos_scale = std::max(cos_scale, std::abs(cosine_distance(a * k, b).item() - d));
      cos_scale = std::max(cos_scale, std::abs(cosine_distance(a, b * k).item() - d));
    }
    cos_self = std::max(cos_self, std::abs(cosine_distance(a, a).item()));
    cos_opp = std::max(cos_opp, std::abs(cosine_distance(a, a * -1.0).item() - 2.0));

    const auto clean = synth_speechlike(derive_seed({2, static_cast<std::uint64_t>(trial)}));
    const auto noise = synth_noise(NoiseKind::pink, derive_seed({3, static_cast<std::uint64_t>(trial)}), 2.0);
    const auto ex = mix_at_snr(clean, noise, 5 * trial - 5);
    const double base_si_snr = si_snr(ex.clean.samples, ex.noisy.samples);
    const double base_si_sdr = si_sdr(ex.clean.samples, ex.noisy.samples);
    for (double k : {1e-4, 0.25, 3.0, 1e4}) {
      std::vector<double> scaled(ex.noisy.samples);
      for (auto& v : scaled) v *= k;
      snr_scale = std::max(snr_scale, std::abs(si_snr(ex.clean.samples, scaled) - base_si_snr));
      snr_scale = std::max(snr_scale, std::abs(si_sdr(ex.clean.samples, scaled) - base_si_sdr));
    }
  }
  verdict("loss invariances", cos_scale <= 1e-12 && snr_scale <= 1e-9 && cos_self <= 1e-12 && cos_opp <= 1e-12,
          fmt("cosine scale dev %.1e (<= 1e-12), SI-SNR/SI-SDR scale dev %.1e dB (<= 1e-9), |d(A,A)| %.1e, "
              "|d(A,-A)-2| %.1e (<= 1e-12)",
              cos_scale, snr_scale, cos_self, cos_opp));
}

void dsp() {
  double worst = 0.0;
  bool grid_ok = true;
  std::vector<AudioSignal> signals{synth_speechlike(5), synth_noise(NoiseKind::white, 6, 2.0),
                                   synth_noise(NoiseKind::babble, 7, 2.0)};
  const auto ex = mix_at_snr(signals[0], synth_noise(NoiseKind::pink, 8, 2.0), 0);
  signals.push_back(ex.noisy);
  for (const auto& s : signals) {
    const auto spec = stft(s);
    const auto mag = spec.magnitude();
    grid_ok = grid_ok && mag.frames == 126 && mag.bins == 256;
    // Round trip on the full one-sided spectrum.
    const auto y = istft(spec.magnitude(spec.bins()), spec.phase(), StftConfig{}, s.size());
    double e = 0.0, n = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      e += (y.samples[i] - s.samples[i]) * (y.samples[i] - s.samples[i]);
      n += s.samples[i] * s.samples[i];
    }
    worst = std::max(worst, std::sqrt(e / n));
  }
  verdict("DSP", worst <= 1e-6 && grid_ok,
          fmt("STFT->ISTFT max rel. L2 error %.2e (<= 1e-6) over %zu signals; 32000 samples -> %s magnitude grid",
              worst, signals.size(), grid_ok ? "126x256" : "WRONG"));
}

void mixing() {
  double worst = 0.0, max_peak = 0.0;
  std::size_t n = 0;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto clean = synth_speechlike(derive_seed({11, s}));
    for (auto kind : {NoiseKind::white, NoiseKind::pink, NoiseKind::babble}) {
      const auto noise = synth_noise(kind, derive_seed({12, s}), 2.0);
      for (int snr = kMinSnrDb; snr <= kMaxSnrDb; ++snr) {
        const auto ex = mix_at_snr(clean, noise, snr);
        // Undo the joint peak scaling to measure the pre-scaling SNR.
        double pc = 0.0, pn = 0.0;
        for (std::size_t i = 0; i < clean.size(); ++i) {
          const double c = ex.clean.samples[i] / ex.scale, d = (ex.noisy.samples[i] - ex.clean.samples[i]) / ex.scale;
          pc += c * c;
          pn += d * d;
        }
        worst = std::max(worst, std::abs(10.0 * std::log10(pc / pn) - snr));
        max_peak = std::max(max_peak, peak(ex.noisy.samples));
        ++n;
      }
    }
  }
  // Sampled mixtures of a small corpus, every split.
  const auto m = synthetic_manifest(13, {20, 6, 6, 3, 3, 3, 2.0, 4.0});
  for (const char* split : {"train", "validation", "test"}) {
    const auto d = load_split(m, split);
    for (std::uint64_t epoch = 0; epoch < 3; ++epoch) {
      EpochSampler sampler(d, 13, epoch);
      for (std::size_t i = 0; i < sampler.size(); ++i) {
        const auto ex = sampler(i);
        max_peak = std::max(max_peak, peak(ex.noisy.samples));
        ++n;
      }
    }
  }
  verdict("mixing", worst <= 1e-6 && max_peak <= 1.0,
          fmt("%zu mixtures; max |realized - requested| SNR %.2e dB (<= 1e-6); max noisy peak %.17g (<= 1)", n, worst,
              max_peak));
}

// --- Desk-scale end-to-end -------------------------------------------------------

struct Desk {
  SplitManifest manifest;
  SplitData train, validation, test;
  std::vector<MixExample> test_set;
};

double mean_kd(const UNetModel& teacher, const UNetModel& student, const BottleneckAdapter& adapter,
               const SplitData& split, const TrainConfig& cfg) {
  NoGradGuard guard;
  EpochSampler sampler(split, cfg.seed, kFrozenValidationEpoch);
  double s = 0.0;
  for (std::size_t i = 0; i < sampler.size(); ++i) {
    const auto f = features(sampler(i), cfg.stft);
    s += cosine_distance(adapter.forward(teacher.forward(f.mag).latent), student.forward(f.mag).latent).item();
  }
  return s / static_cast<double>(sampler.size());
}

void desk_scale(const fs::path& work) {
  const auto t_start = std::chrono::steady_clock::now();
  Desk d;
  d.manifest = synthetic_manifest(7, {200, 50, 50, 18, 6, 6, 2.0, 4.0});
  d.train = load_split(d.manifest, "train");
  d.validation = load_split(d.manifest, "validation");
  d.test = load_split(d.manifest, "test");
  d.test_set = frozen_test_set(d.test, d.manifest.seed);
  const auto base = evaluate_passthrough(d.test_set);
  note(fmt("corpus %zu/%zu/%zu segments, pass-through SI-SDR %.3f dB", d.train.segments.size(),
           d.validation.segments.size(), d.test.segments.size(), base.si_sdr().mean));

  // (a) teacher pretraining
  TrainConfig tcfg;
  tcfg.seed = 1;
  tcfg.max_epochs = 50;
  UNetModel teacher(preset("mt1"), 1);
  const auto t0 = std::chrono::steady_clock::now();
  const auto tres = pretrain_teacher(teacher, d.train, d.validation, tcfg, [&](const EpochRecord& r) {
    note(fmt("teacher epoch %zu  l_out %.4f  val %.4f%s  %.0f s", r.epoch, r.l_out, r.val_loss,
             r.improved ? " *" : "", seconds_since(t0)));
  });
  const double t_secs = seconds_since(t0);
  const auto trep = evaluate(teacher, d.test_set);
  const double gain = trep.si_sdr().mean - base.si_sdr().mean;
  save_checkpoint(make_checkpoint(teacher), work / "teacher.ckpt");

  // (b) + (d) distillation into the micro student, (C) scenario
  const std::string digest_before = parameter_digest(teacher.parameters());
  TrainConfig scfg;
  scfg.seed = 2;
  scfg.max_epochs = 20;
  scfg.scenario = "t1s1";
  UNetModel student(preset("ms1"), 2);
  auto adapter = scenario_adapter(teacher, student, scfg.scenario, 3);
  const double kd_initial = mean_kd(teacher, student, adapter, d.validation, scfg);
  const auto s0 = std::chrono::steady_clock::now();
  const auto sres = distill_student(teacher, student, adapter, d.train, d.validation, scfg, [&](const EpochRecord& r) {
    note(fmt("student epoch %zu  l_kd %.4f  l_out %.4f  val %.4f%s  %.0f s", r.epoch, r.l_kd, r.l_out, r.val_loss,
             r.improved ? " *" : "", seconds_since(s0)));
  });
  const double kd_final = mean_kd(teacher, student, adapter, d.validation, scfg);
  const auto srep = evaluate(student, d.test_set);
  note(fmt("student SI-SDR %.3f dB (pass-through %.3f), first-epoch train l_kd %.4f", srep.si_sdr().mean,
           base.si_sdr().mean, sres.history.front().l_kd));

  // (c) lambda_kd = 0 against supervised training, equal seeds
  TrainConfig zcfg = scfg;
  zcfg.max_epochs = 2;
  zcfg.weights = {0.0, 1.0};
  UNetModel zs(preset("ms1"), 4);
  auto za = scenario_adapter(teacher, zs, zcfg.scenario, 5);
  const auto zres = distill_student(teacher, zs, za, d.train, d.validation, zcfg);
  UNetModel sup(preset("ms1"), 4);
  const auto sup_res = train_supervised(sup, d.train, d.validation, zcfg);
  bool histories_match = zres.history.size() == sup_res.history.size();
  for (std::size_t i = 0; histories_match && i < zres.history.size(); ++i) {
    const auto &a = zres.history[i], &b = sup_res.history[i];
    histories_match = a.l_out == b.l_out && a.l_tot == b.l_tot && a.val_loss == b.val_loss && a.best_val == b.best_val;
  }
  const bool params_match = parameter_digest(zs.parameters()) == parameter_digest(sup.parameters());
  const std::string digest_after = parameter_digest(teacher.parameters());
  const double total = seconds_since(t_start);

  const bool a_ok = gain >= 3.0 && tres.history.size() <= 50 && t_secs < 1800.0;
  const bool b_ok = kd_final < 0.5 * kd_initial;
  const bool c_ok = histories_match && params_match;
  const bool d_ok = digest_before == digest_after &&
                    parameter_digest(model_from_checkpoint(load_checkpoint(work / "teacher.ckpt")).parameters()) ==
                        digest_after;
  verdict("desk-scale end-to-end", a_ok && b_ok && c_ok && d_ok,
          fmt("(a) teacher +%.3f dB over pass-through (>= 3) after %zu epochs, best %zu, %.0f s (< 1800) %s; "
              "(b) L_kd %.4f -> %.4f = %.1f%% of initial (< 50%%) %s; (c) lambda_kd=0 vs supervised: histories %s, "
              "parameters %s %s; (d) teacher digest %s -> %s %s; total %.0f s",
              gain, tres.history.size(), tres.best_epoch, t_secs, a_ok ? "ok" : "FAILED", kd_initial, kd_final,
              100.0 * kd_final / kd_initial, b_ok ? "ok" : "FAILED", histories_match ? "identical" : "differ",
              params_match ? "identical" : "differ", c_ok ? "ok" : "FAILED", digest_before.c_str(),
              digest_after.c_str(), d_ok ? "ok" : "FAILED", total));
}

// --- Repeat harness through the command-line tool ----------------------------------

void repeat_harness(const fs::path& work) {
  const fs::path data = work / "repeat_data";
  bool ok = run_cli("synthdata --out " + data.string() + " --count 5 --seed 4", work / "synth.log") == 0;
  {
    std::ofstream cfg(work / "repeat.json");
    cfg << nlohmann::json{{"student", "ms1"},
                          {"scenario", "t1s1"},
                          {"manifest", (data / "manifest.json").string()},
                          {"train", {{"batch_size", 2}, {"max_epochs", 1}}}}
               .dump(2);
  }
  const std::string common = "distill --config " + (work / "repeat.json").string() + " --teacher " +
                             (work / "teacher.ckpt").string() + " --repeats 5";
  const int fixed_code = run_cli(common + " --fixed-seed --out " + (work / "fixed").string(), work / "fixed.log");
  const int varied_code = run_cli(common + " --seed 10 --out " + (work / "varied").string(), work / "varied.log");
  ok = ok && fixed_code == 0 && varied_code == 0;

  const std::string fixed = slurp(work / "fixed" / "table.txt"), varied = slurp(work / "varied" / "table.txt");
  std::fputs(fixed.c_str(), stderr);
  std::fputs(varied.c_str(), stderr);
  auto count = [](const std::string& s, const std::string& what) {
    std::size_t n = 0;
    for (auto p = s.find(what); p != std::string::npos; p = s.find(what, p + 1)) ++n;
    return n;
  };
  const bool header = fixed.rfind("Mean/STD of evaluation metrics\n", 0) == 0 &&
                      varied.rfind("Mean/STD of evaluation metrics\n", 0) == 0 &&
                      fixed.find("SDR") != std::string::npos && fixed.find("SI-SDR") != std::string::npos &&
                      fixed.find("STOI") != std::string::npos;
  const bool zero_std = count(fixed, "/0.0000 ") == 3;
  std::size_t fixed_runs = 0, varied_runs = 0;
  try {
    fixed_runs = nlohmann::json::parse(slurp(work / "fixed" / "run.json")).at("runs").size();
    varied_runs = nlohmann::json::parse(slurp(work / "varied" / "run.json")).at("runs").size();
  } catch (const std::exception&) {
    ok = false;
  }
  ok = ok && header && zero_std && fixed_runs == 5 && varied_runs == 5;
  verdict("repeat harness", ok,
          fmt("--repeats 5 exit codes %d/%d, %zu and %zu runs, table header %s, equal-seed STD cells zero: %zu/3",
              fixed_code, varied_code, fixed_runs, varied_runs, header ? "ok" : "WRONG", count(fixed, "/0.0000 ")));
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "lbkd_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  auto guarded = [](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      verdict(name, false, std::string("exception: ") + e.what());
    }
  };
  guarded("gradient suite", gradient_suite);
  guarded("shape oracle", shape_oracle);
  guarded("accounting", accounting);
  guarded("loss invariances", loss_invariances);
  guarded("DSP", dsp);
  guarded("mixing", mixing);
  guarded("desk-scale end-to-end", [&] { desk_scale(work); });
  guarded("repeat harness", [&] { repeat_harness(work); });
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
