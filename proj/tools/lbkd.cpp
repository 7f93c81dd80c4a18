// lbkd command-line front end: pretrain, distill, eval, gradcheck, synthdata.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "lbkd/lbkd.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Corpus {
  lbkd::SplitManifest manifest;
  lbkd::SplitData train, validation, test;
};

Corpus load_corpus(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) throw lbkd::ConfigError("manifest: file not found: " + manifest_path.string());
  Corpus c;
  c.manifest = lbkd::read_manifest(manifest_path);
  c.train = lbkd::load_split(c.manifest, "train");
  c.validation = lbkd::load_split(c.manifest, "validation");
  c.test = lbkd::load_split(c.manifest, "test");
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw lbkd::FormatError("cannot write " + path.string());
  out << text;
}

// Records what was run and what it produced; no timestamps, so reruns with
// the same flags write identical files.
void write_run_manifest(const fs::path& out_dir, const std::string& command, json details) {
  details["command"] = command;
  details["format"] = "lbkd-run";
  write_text(out_dir / "run.json", details.dump(2) + "\n");
}

lbkd::EpochCallback progress(const std::string& tag) {
  return [tag](const lbkd::EpochRecord& r) {
    std::fprintf(stderr, "[%s] epoch %zu  l_kd %.5f  l_out %.5f  l_tot %.5f  val %.5f%s\n", tag.c_str(), r.epoch,
                 r.l_kd, r.l_out, r.l_tot, r.val_loss, r.improved ? "  *" : "");
  };
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string teacher, model, test, out;
  std::optional<double> lambda_kd, lambda_out;
  std::optional<std::string> scenario;
  std::optional<std::size_t> max_epochs;
  std::size_t repeats = 1;
  bool fixed_seed = false;
  std::size_t count = 200;
};

lbkd::ExperimentConfig resolve_config(const Options& o) {
  auto cfg = lbkd::load_experiment(o.config);
  if (o.seed) cfg.train.seed = *o.seed;
  if (!o.out.empty()) cfg.out = o.out;
  if (o.lambda_kd) cfg.train.weights.lambda_kd = *o.lambda_kd;
  if (o.lambda_out) cfg.train.weights.lambda_out = *o.lambda_out;
  if (o.scenario) {
    lbkd::scenario_axes(*o.scenario);
    cfg.train.scenario = *o.scenario;
  }
  if (o.max_epochs) cfg.train.max_epochs = *o.max_epochs;
  if (cfg.train.weights.lambda_kd < 0.0 || cfg.train.weights.lambda_out < 0.0)
    throw lbkd::ConfigError("lambda: weights must be >= 0");
  cfg.train.check();
  return cfg;
}

json history_summary(const lbkd::TrainResult& r) {
  return {{"epochs_run", r.history.size()}, {"best_epoch", r.best_epoch}, {"best_val", r.best_val},
          {"stopped_early", r.stopped_early}};
}

int cmd_pretrain(const Options& o) {
  const auto cfg = resolve_config(o);
  if (!cfg.teacher) throw lbkd::ConfigError("teacher: missing required field for pretrain");
  const auto corpus = load_corpus(cfg.manifest);
  fs::create_directories(cfg.out);
  lbkd::UNetModel teacher(*cfg.teacher, lbkd::derive_seed({cfg.train.seed, 0x74ULL}));
  const auto result = lbkd::pretrain_teacher(teacher, corpus.train, corpus.validation, cfg.train, progress("pretrain"));
  json meta{{"role", "teacher"}, {"seed", cfg.train.seed}, {"train", lbkd::train_config_to_json(cfg.train)},
            {"history", history_summary(result)}};
  lbkd::save_checkpoint(lbkd::make_checkpoint(teacher, meta), cfg.out / "teacher.ckpt");
  write_text(cfg.out / "history.tsv", lbkd::format_history(result.history));
  write_run_manifest(cfg.out, "pretrain",
                     {{"config", o.config}, {"manifest", cfg.manifest.string()}, {"seed", cfg.train.seed},
                      {"model", lbkd::config_to_json(*cfg.teacher)}, {"train", lbkd::train_config_to_json(cfg.train)},
                      {"history", history_summary(result)},
                      {"outputs", {"teacher.ckpt", "history.tsv"}},
                      {"teacher_digest", lbkd::parameter_digest(teacher.parameters())}});
  std::printf("teacher checkpoint: %s (best epoch %zu, val loss %.6f)\n", (cfg.out / "teacher.ckpt").c_str(),
              result.best_epoch, result.best_val);
  return 0;
}

int cmd_distill(const Options& o) {
  auto cfg = resolve_config(o);
  if (!cfg.student) throw lbkd::ConfigError("student: missing required field for distill");
  if (o.teacher.empty()) throw lbkd::ConfigError("--teacher: required for distill");
  if (o.repeats == 0) throw lbkd::ConfigError("--repeats: must be >= 1");
  const auto teacher = lbkd::model_from_checkpoint(lbkd::load_checkpoint(o.teacher), o.teacher);
  if (!(teacher.config().input == cfg.student->input)) {
    throw lbkd::ConfigError("student.input: " + lbkd::to_string(cfg.student->input) + " differs from the teacher's " +
                            lbkd::to_string(teacher.config().input));
  }
  {
    // Rejects incompatible latents before any data is touched.
    lbkd::UNetModel probe(*cfg.student, 0);
    lbkd::scenario_adapter(teacher, probe, cfg.train.scenario, 0);
  }
  const auto corpus = load_corpus(cfg.manifest);
  const auto test = lbkd::frozen_test_set(corpus.test, corpus.manifest.seed);
  fs::create_directories(cfg.out);
  const std::string teacher_digest = lbkd::parameter_digest(teacher.parameters());

  json runs = json::array();
  auto run_one = [&](std::uint64_t seed) {
    auto tc = cfg.train;
    tc.seed = seed;
    lbkd::UNetModel student(*cfg.student, lbkd::derive_seed({seed, 0x73ULL}));
    auto adapter = lbkd::scenario_adapter(teacher, student, tc.scenario, lbkd::derive_seed({seed, 0x62ULL}));
    const auto result = lbkd::distill_student(teacher, student, adapter, corpus.train, corpus.validation, tc,
                                              progress("distill seed " + std::to_string(seed)));
    const std::string suffix = o.repeats > 1 ? "_seed" + std::to_string(seed) + "_run" + std::to_string(runs.size()) : "";
    json meta{{"role", "student"},       {"seed", seed},
              {"scenario", tc.scenario}, {"train", lbkd::train_config_to_json(tc)},
              {"teacher", o.teacher},    {"teacher_digest", teacher_digest},
              {"history", history_summary(result)}};
    lbkd::save_checkpoint(lbkd::make_checkpoint(student, meta), cfg.out / ("student" + suffix + ".ckpt"));
    lbkd::save_checkpoint(lbkd::make_checkpoint(adapter, meta), cfg.out / ("bottleneck" + suffix + ".ckpt"));
    write_text(cfg.out / ("history" + suffix + ".tsv"), lbkd::format_history(result.history));
    auto report = lbkd::evaluate(student, test, tc.stft);
    lbkd::write_report(report, cfg.out / ("report" + suffix + ".tsv"));
    runs.push_back({{"seed", seed}, {"suffix", suffix}, {"history", history_summary(result)},
                    {"si_sdr_mean", report.si_sdr().mean}});
    return report;
  };

  json details{{"config", o.config},        {"manifest", cfg.manifest.string()},
               {"teacher", o.teacher},      {"teacher_digest", teacher_digest},
               {"scenario", cfg.train.scenario}, {"student", lbkd::config_to_json(*cfg.student)},
               {"train", lbkd::train_config_to_json(cfg.train)}};
  if (o.repeats == 1) {
    const auto report = run_one(cfg.train.seed);
    std::printf("student mean SI-SDR %.4f dB, SDR %.4f dB, STOI %.4f\n", report.si_sdr().mean, report.sdr().mean,
                report.stoi().mean);
  } else {
    const auto seeds = o.fixed_seed ? std::vector<std::uint64_t>(o.repeats, cfg.train.seed)
                                    : lbkd::repeat_seeds(cfg.train.seed, o.repeats);
    const auto summary = lbkd::run_repeats(teacher.config().name + " -> " + cfg.student->name + " " +
                                               lbkd::axes_label(lbkd::scenario_axes(cfg.train.scenario)),
                                           seeds, run_one);
    const std::string table = lbkd::format_mean_std_table({summary.row});
    write_text(cfg.out / "table.txt", table);
    std::fputs(table.c_str(), stdout);
    details["repeats"] = o.repeats;
    details["fixed_seed"] = o.fixed_seed;
  }
  if (lbkd::parameter_digest(teacher.parameters()) != teacher_digest)
    throw lbkd::TrainingError("teacher parameters changed during distillation");
  details["runs"] = runs;
  write_run_manifest(cfg.out, "distill", details);
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.model.empty()) throw lbkd::ConfigError("--model: required for eval");
  if (o.test.empty()) throw lbkd::ConfigError("--test: required for eval");
  if (!fs::exists(o.test)) throw lbkd::ConfigError("--test: manifest not found: " + o.test);
  const auto ckpt = lbkd::load_checkpoint(o.model);
  const auto model = lbkd::model_from_checkpoint(ckpt, o.model);
  const auto manifest = lbkd::read_manifest(o.test);
  const auto test = lbkd::frozen_test_set(lbkd::load_split(manifest, "test"), manifest.seed);
  lbkd::StftConfig stft_cfg;
  stft_cfg.fft_size = 2 * model.config().input.w;
  stft_cfg.hop = stft_cfg.fft_size / 2;
  const auto report = lbkd::evaluate(model, test, stft_cfg);
  const auto baseline = lbkd::evaluate_passthrough(test);
  const fs::path out = o.out.empty() ? fs::path("eval_out") : fs::path(o.out);
  fs::create_directories(out);
  lbkd::write_report(report, out / "report.tsv");
  lbkd::write_report(baseline, out / "passthrough.tsv");
  const std::string table = lbkd::format_mean_std_table(
      {{"pass-through", baseline.sdr(), baseline.si_sdr(), baseline.stoi()},
       {model.config().name, report.sdr(), report.si_sdr(), report.stoi()}});
  std::fputs(table.c_str(), stdout);
  write_run_manifest(out, "eval",
                     {{"model", o.model}, {"test", o.test}, {"examples", test.size()},
                      {"si_sdr_mean", report.si_sdr().mean}, {"passthrough_si_sdr_mean", baseline.si_sdr().mean},
                      {"outputs", {"report.tsv", "passthrough.tsv"}}});
  return 0;
}

int cmd_gradcheck(const Options& o) {
  std::vector<lbkd::GradcheckResult> results;
  bool ok = true;
  for (const auto& c : lbkd::gradcheck_suite(o.seed.value_or(0))) {
    results.push_back(lbkd::gradcheck(c));
    ok = ok && results.back().pass();
  }
  std::fputs(lbkd::format_gradcheck(results).c_str(), stdout);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_text(fs::path(o.out) / "gradcheck.txt", lbkd::format_gradcheck(results));
    write_run_manifest(o.out, "gradcheck", {{"seed", o.seed.value_or(0)}, {"passed", ok}});
  }
  return ok ? 0 : 1;
}

int cmd_synthdata(const Options& o) {
  if (o.out.empty()) throw lbkd::ConfigError("--out: required for synthdata");
  if (o.count < 3) throw lbkd::ConfigError("--count: need at least 3 speech files for three splits");
  const std::uint64_t seed = o.seed.value_or(0);
  const auto speech = lbkd::split_counts(o.count);
  const auto noise = lbkd::split_counts(std::max<std::size_t>(5, o.count / 5));
  lbkd::SyntheticCorpusSpec spec;
  spec.train_speech = speech[0];
  spec.validation_speech = speech[1];
  spec.test_speech = speech[2];
  spec.train_noise = noise[0];
  spec.validation_noise = noise[1];
  spec.test_noise = noise[2];
  auto manifest = lbkd::synthetic_manifest(seed, spec);
  const fs::path out(o.out);
  fs::create_directories(out / "speech");
  fs::create_directories(out / "noise");
  for (auto* split : {&manifest.train, &manifest.validation, &manifest.test}) {
    for (auto* list : {&split->speech, &split->noise}) {
      const std::string dir = list == &split->speech ? "speech" : "noise";
      for (auto& src : *list) {
        const auto signal = lbkd::realize(src, out);
        const std::string rel = dir + "/" + src.id + ".wav";
        lbkd::save_wav(signal, out / rel);
        src = {src.id, "wav", 0, src.seconds, rel};
      }
    }
  }
  lbkd::write_manifest(manifest, out / "manifest.json");
  write_run_manifest(out, "synthdata",
                     {{"seed", seed}, {"count", o.count},
                      {"speech_files", {speech[0], speech[1], speech[2]}},
                      {"noise_files", {noise[0], noise[1], noise[2]}},
                      {"outputs", {"manifest.json", "speech/", "noise/"}}});
  std::printf("wrote %zu speech and %zu noise files to %s\n", o.count, noise[0] + noise[1] + noise[2], o.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-bottleneck knowledge distillation for speech denoising"};
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&](CLI::App* c) {
    c->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { o.seed = s; }, "random seed");
  };
  auto add_training = [&](CLI::App* c) {
    c->add_option("--config", o.config, "experiment config (JSON)")->required();
    c->add_option("--out", o.out, "output directory (overrides the config)");
    c->add_option_function<std::size_t>("--max-epochs", [&](std::size_t v) { o.max_epochs = v; },
                                        "override train.max_epochs");
    add_seed(c);
  };

  auto* pretrain = app.add_subcommand("pretrain", "train a teacher with the supervised SI-SNR loss");
  add_training(pretrain);

  auto* distill = app.add_subcommand("distill", "distill a student from a frozen teacher");
  add_training(distill);
  distill->add_option("--teacher", o.teacher, "teacher checkpoint")->required();
  distill->add_option_function<double>("--lambda-kd", [&](double v) { o.lambda_kd = v; }, "KD loss weight");
  distill->add_option_function<double>("--lambda-out", [&](double v) { o.lambda_out = v; }, "output loss weight");
  distill->add_option_function<std::string>("--scenario", [&](const std::string& v) { o.scenario = v; },
                                            "t1s1, t1s2 or t2s2");
  distill->add_option("--repeats", o.repeats, "independently seeded runs (>= 2 prints a mean/STD table)");
  distill->add_flag("--fixed-seed", o.fixed_seed, "use the same seed for every repeat");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on the frozen test split");
  eval->add_option("--model", o.model, "model checkpoint")->required();
  eval->add_option("--test", o.test, "data manifest")->required();
  eval->add_option("--out", o.out, "output directory");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  add_seed(gradcheck);
  gradcheck->add_option("--out", o.out, "output directory");

  auto* synthdata = app.add_subcommand("synthdata", "write a deterministic synthetic corpus and manifest");
  synthdata->add_option("--out", o.out, "output directory")->required();
  synthdata->add_option("--count", o.count, "number of speech files");
  add_seed(synthdata);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*pretrain) return cmd_pretrain(o);
    if (*distill) return cmd_distill(o);
    if (*eval) return cmd_eval(o);
    if (*gradcheck) return cmd_gradcheck(o);
    if (*synthdata) return cmd_synthdata(o);
  } catch (const lbkd::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const lbkd::Error& e) {
    std::fprintf(stderr, "%s error: %s\n", e.kind().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
