#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include "json.hpp"
#include "lbkd/error.hpp"
#include "lbkd/models.hpp"
#include "lbkd/training.hpp"

namespace lbkd {

// Experiment file (JSON). Every key is optional except "manifest"; unknown
// keys are rejected. Relative paths are taken from the config file's folder.
//
//   {
//     "teacher":  "mt1" | {model object},
//     "student":  "ms1" | {model object},
//     "scenario": "t1s1" | "t1s2" | "t2s2",
//     "manifest": "data/manifest.json",
//     "out":      "runs/exp",
//     "seed":     0,
//     "train": {"batch_size": 32, "max_epochs": 100, "patience": 10, "min_delta": 1e-4,
//               "lr": 1e-3, "lambda_kd": 1.0, "lambda_out": 1.0},
//     "stft":  {"fft_size": 512, "hop": 256}
//   }
struct ExperimentConfig {
  std::optional<ModelConfig> teacher;
  std::optional<ModelConfig> student;
  std::filesystem::path manifest;
  std::filesystem::path out = "out";
  TrainConfig train;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) throw ConfigError(where + key + ": unknown field");
  }
}

template <typename T>
T typed(const nlohmann::json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + key + ": wrong type (" + j.at(key).dump() + ")");
  }
}

}  // namespace detail

inline nlohmann::json train_config_to_json(const TrainConfig& t) {
  return {{"batch_size", t.batch_size}, {"max_epochs", t.max_epochs}, {"patience", t.patience},
          {"min_delta", t.min_delta},   {"lr", t.adam.lr},            {"lambda_kd", t.weights.lambda_kd},
          {"lambda_out", t.weights.lambda_out}};
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  using detail::typed;
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  detail::reject_unknown(j, {"teacher", "student", "scenario", "manifest", "out", "seed", "train", "stft"}, "");
  ExperimentConfig cfg;
  if (j.contains("teacher")) cfg.teacher = config_from_json(j.at("teacher"), "teacher");
  if (j.contains("student")) cfg.student = config_from_json(j.at("student"), "student");
  if (!j.contains("manifest")) throw ConfigError("manifest: missing required field");
  auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() ? p : base_dir / p; };
  cfg.manifest = resolve(typed<std::string>(j, "manifest", ""));
  if (j.contains("out")) cfg.out = resolve(typed<std::string>(j, "out", ""));
  if (j.contains("seed")) cfg.train.seed = typed<std::uint64_t>(j, "seed", "");
  if (j.contains("scenario")) {
    cfg.train.scenario = typed<std::string>(j, "scenario", "");
    scenario_axes(cfg.train.scenario);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    if (!t.is_object()) throw ConfigError("train: expected an object");
    detail::reject_unknown(t, {"batch_size", "max_epochs", "patience", "min_delta", "lr", "lambda_kd", "lambda_out"},
                           "train.");
    auto& tc = cfg.train;
    if (t.contains("batch_size")) tc.batch_size = typed<std::size_t>(t, "batch_size", "train.");
    if (t.contains("max_epochs")) tc.max_epochs = typed<std::size_t>(t, "max_epochs", "train.");
    if (t.contains("patience")) tc.patience = typed<std::size_t>(t, "patience", "train.");
    if (t.contains("min_delta")) tc.min_delta = typed<double>(t, "min_delta", "train.");
    if (t.contains("lr")) tc.adam.lr = typed<double>(t, "lr", "train.");
    if (t.contains("lambda_kd")) tc.weights.lambda_kd = typed<double>(t, "lambda_kd", "train.");
    if (t.contains("lambda_out")) tc.weights.lambda_out = typed<double>(t, "lambda_out", "train.");
    if (tc.min_delta < 0.0) throw ConfigError("train.min_delta: must be >= 0");
    if (tc.weights.lambda_kd < 0.0) throw ConfigError("train.lambda_kd: must be >= 0");
    if (tc.weights.lambda_out < 0.0) throw ConfigError("train.lambda_out: must be >= 0");
  }
  if (j.contains("stft")) {
    const auto& s = j.at("stft");
    if (!s.is_object()) throw ConfigError("stft: expected an object");
    detail::reject_unknown(s, {"fft_size", "hop"}, "stft.");
    if (s.contains("fft_size")) cfg.train.stft.fft_size = typed<std::size_t>(s, "fft_size", "stft.");
    if (s.contains("hop")) cfg.train.stft.hop = typed<std::size_t>(s, "hop", "stft.");
    const auto n = cfg.train.stft.fft_size;
    if (n < 4 || (n & (n - 1)) != 0) throw ConfigError("stft.fft_size: must be a power of two >= 4");
    if (cfg.train.stft.hop == 0 || cfg.train.stft.hop > n / 2) throw ConfigError("stft.hop: must be in [1, fft_size/2]");
  }
  cfg.train.check();
  for (const auto* m : {&cfg.teacher, &cfg.student}) {
    if (*m && (*m)->input.w != cfg.train.stft.model_bins()) {
      throw ConfigError((m == &cfg.teacher ? "teacher" : "student") + std::string(".input: ") +
                        std::to_string((*m)->input.w) + " frequency bins, STFT yields " +
                        std::to_string(cfg.train.stft.model_bins()));
    }
  }
  return cfg;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_from_json(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

}  // namespace lbkd
