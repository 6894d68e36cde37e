// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "asgd/datagen.hpp"
#include "asgd/errors.hpp"
#include "asgd/models.hpp"
#include "asgd/schedules.hpp"
#include "asgd/sim.hpp"

namespace asgd {

enum class TrainMode { async, sync };
enum class SimMode { deterministic, concurrent };

struct DataConfig {
  std::uint64_t seed = 1;
  long n_sentences = 10000;
  int vocab = 16;
  int len_min = 5;
  int len_max = 20;
  MarkovPattern pattern = MarkovPattern::peaked;
};

struct ModelConfig {
  ModelKind kind = ModelKind::gru_lm;
  int in_dim = 0;
  int hidden = 0;
  int classes = 0;
  int vocab = 0;
  int embed_dim = 0;

  ModelSpec spec() const {
    switch (kind) {
      case ModelKind::linear_regression: return ModelSpec::linear(in_dim);
      case ModelKind::mlp_classifier: return ModelSpec::mlp(in_dim, hidden, classes);
      case ModelKind::gru_lm: return ModelSpec::gru(vocab, embed_dim, hidden);
    }
    throw std::logic_error("unreachable");
  }
};

struct BatchConfig {
  long word_budget = 400;
  long sort_window = 1000;
};

struct TrainConfig {
  int workers = 1;
  int tau = 1;
  TrainMode mode = TrainMode::async;
  LrMode lr_mode = LrMode::mean_tokens;
};

struct OptimizerConfig {
  double base_lr = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ScheduleConfig {
  long warmup_steps = 300;
  Cooldown cooldown = Cooldown::none;
  double beta1_after = 0.5;
  long beta1_switch_step = 1000;
};

struct LocalOptConfig {
  long window = 400;
};

struct SimRunConfig {
  SimMode mode = SimMode::deterministic;
  double tokens_per_sec = 10000;
  double push_overhead_sec = 0.05;
  double jitter = 0;
  std::uint64_t seed = 1;
};

struct StopConfig {
  int patience = 5;
  long eval_every_updates = 50;
  double min_delta = 0;    // CE must drop below best - min_delta to count as progress
  double target_ce = 0;    // 0 disables time-to-target tracking
  long max_updates = 0;    // 0 means no cap
};

/// The full experiment description. Key paths in the JSON config file match
/// the member paths here (experiment.name, data.seed, train.tau, ...);
/// unknown keys are rejected.
struct ExperimentConfig {
  std::string name = "experiment";
  DataConfig data;
  ModelConfig model;
  BatchConfig batch;
  TrainConfig train;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  LocalOptConfig local_opt;
  SimRunConfig sim;
  StopConfig stop;

  ModelSpec model_spec() const { return model.spec(); }

  TrainSchedule train_schedule() const {
    TrainSchedule s;
    s.base_lr = optimizer.base_lr;
    s.warmup_steps = schedule.warmup_steps;
    s.cooldown = schedule.cooldown;
    s.beta1_before = optimizer.beta1;
    s.beta1_after = schedule.beta1_after;
    s.beta1_switch_step = schedule.beta1_switch_step;
    s.local_opt_window = local_opt.window;
    s.lr_mode = train.lr_mode;
    return s;
  }

  AdamConsts adam_consts() const { return {optimizer.beta2, optimizer.eps}; }

  CostModel cost_model() const {
    return {sim.tokens_per_sec, sim.push_overhead_sec, sim.jitter};
  }

  void validate() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_file(const std::string& path);
  nlohmann::json to_json() const;
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(const nlohmann::json& root) : root_(root) {}

  const nlohmann::json* section(const std::string& name,
                                const std::set<std::string>& allowed) {
    if (!root_.contains(name)) return nullptr;
    const auto& sec = root_.at(name);
    if (!sec.is_object()) {
      problems_.push_back(name + ": expected an object");
      return nullptr;
    }
    for (const auto& [key, _] : sec.items())
      if (!allowed.count(key)) problems_.push_back(name + "." + key + ": unknown key");
    return &sec;
  }

  template <typename T>
  void get(const nlohmann::json* sec, const std::string& section_name,
           const std::string& key, T& out) {
    if (!sec || !sec->contains(key)) return;
    try {
      out = sec->at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      problems_.push_back(section_name + "." + key + ": wrong type");
    }
  }

  void get_enum(const nlohmann::json* sec, const std::string& section_name,
                const std::string& key, const std::vector<std::string>& names,
                int& out_index) {
    std::string value;
    bool present = sec && sec->contains(key);
    if (!present) return;
    get(sec, section_name, key, value);
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == value) {
        out_index = static_cast<int>(i);
        return;
      }
    }
    std::string expected;
    for (const auto& n : names) expected += (expected.empty() ? "" : "|") + n;
    problems_.push_back(section_name + "." + key + ": expected one of " + expected);
  }

  void check_root(const std::set<std::string>& allowed) {
    for (const auto& [key, _] : root_.items())
      if (!allowed.count(key)) problems_.push_back(key + ": unknown key");
  }

  void add_problem(std::string p) { problems_.push_back(std::move(p)); }
  void finish() const {
    if (!problems_.empty()) throw ConfigError(problems_);
  }

 private:
  const nlohmann::json& root_;
  std::vector<std::string> problems_;
};

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  detail::ConfigReader r(j);
  r.check_root({"experiment", "data", "model", "batch", "train", "optimizer",
                "schedule", "local_opt", "sim", "stop"});

  if (const auto* sec = r.section("experiment", {"name"}))
    r.get(sec, "experiment", "name", cfg.name);

  if (const auto* sec = r.section(
          "data", {"seed", "n_sentences", "vocab", "len_min", "len_max", "pattern"})) {
    r.get(sec, "data", "seed", cfg.data.seed);
    r.get(sec, "data", "n_sentences", cfg.data.n_sentences);
    r.get(sec, "data", "vocab", cfg.data.vocab);
    r.get(sec, "data", "len_min", cfg.data.len_min);
    r.get(sec, "data", "len_max", cfg.data.len_max);
    int pattern = static_cast<int>(cfg.data.pattern);
    r.get_enum(sec, "data", "pattern", {"peaked", "uniform"}, pattern);
    cfg.data.pattern = static_cast<MarkovPattern>(pattern);
  }

  if (const auto* sec = r.section(
          "model", {"kind", "in_dim", "hidden", "classes", "vocab", "embed_dim"})) {
    int kind = static_cast<int>(cfg.model.kind);
    r.get_enum(sec, "model", "kind", {"linear_regression", "mlp_classifier", "gru_lm"},
               kind);
    cfg.model.kind = static_cast<ModelKind>(kind);
    r.get(sec, "model", "in_dim", cfg.model.in_dim);
    r.get(sec, "model", "hidden", cfg.model.hidden);
    r.get(sec, "model", "classes", cfg.model.classes);
    r.get(sec, "model", "vocab", cfg.model.vocab);
    r.get(sec, "model", "embed_dim", cfg.model.embed_dim);
  }

  if (const auto* sec = r.section("batch", {"word_budget", "sort_window"})) {
    r.get(sec, "batch", "word_budget", cfg.batch.word_budget);
    r.get(sec, "batch", "sort_window", cfg.batch.sort_window);
  }

  if (const auto* sec = r.section("train", {"workers", "tau", "mode", "lr_mode"})) {
    r.get(sec, "train", "workers", cfg.train.workers);
    r.get(sec, "train", "tau", cfg.train.tau);
    int mode = static_cast<int>(cfg.train.mode);
    r.get_enum(sec, "train", "mode", {"async", "sync"}, mode);
    cfg.train.mode = static_cast<TrainMode>(mode);
    int lr_mode = static_cast<int>(cfg.train.lr_mode);
    r.get_enum(sec, "train", "lr_mode", {"mean_tokens", "sum"}, lr_mode);
    cfg.train.lr_mode = static_cast<LrMode>(lr_mode);
  }

  if (const auto* sec = r.section("optimizer", {"base_lr", "beta1", "beta2", "eps"})) {
    r.get(sec, "optimizer", "base_lr", cfg.optimizer.base_lr);
    r.get(sec, "optimizer", "beta1", cfg.optimizer.beta1);
    r.get(sec, "optimizer", "beta2", cfg.optimizer.beta2);
    r.get(sec, "optimizer", "eps", cfg.optimizer.eps);
  }

  if (const auto* sec = r.section(
          "schedule", {"warmup_steps", "cooldown", "beta1_after", "beta1_switch_step"})) {
    r.get(sec, "schedule", "warmup_steps", cfg.schedule.warmup_steps);
    int cooldown = static_cast<int>(cfg.schedule.cooldown);
    r.get_enum(sec, "schedule", "cooldown", {"none", "inv_sqrt"}, cooldown);
    cfg.schedule.cooldown = static_cast<Cooldown>(cooldown);
    r.get(sec, "schedule", "beta1_after", cfg.schedule.beta1_after);
    r.get(sec, "schedule", "beta1_switch_step", cfg.schedule.beta1_switch_step);
  }

  if (const auto* sec = r.section("local_opt", {"window"}))
    r.get(sec, "local_opt", "window", cfg.local_opt.window);

  if (const auto* sec = r.section(
          "sim", {"mode", "tokens_per_sec", "push_overhead_sec", "jitter", "seed"})) {
    int mode = static_cast<int>(cfg.sim.mode);
    r.get_enum(sec, "sim", "mode", {"deterministic", "concurrent"}, mode);
    cfg.sim.mode = static_cast<SimMode>(mode);
    r.get(sec, "sim", "tokens_per_sec", cfg.sim.tokens_per_sec);
    r.get(sec, "sim", "push_overhead_sec", cfg.sim.push_overhead_sec);
    r.get(sec, "sim", "jitter", cfg.sim.jitter);
    r.get(sec, "sim", "seed", cfg.sim.seed);
  }

  if (const auto* sec = r.section("stop", {"patience", "eval_every_updates", "min_delta",
                                           "target_ce", "max_updates"})) {
    r.get(sec, "stop", "patience", cfg.stop.patience);
    r.get(sec, "stop", "eval_every_updates", cfg.stop.eval_every_updates);
    r.get(sec, "stop", "min_delta", cfg.stop.min_delta);
    r.get(sec, "stop", "target_ce", cfg.stop.target_ce);
    r.get(sec, "stop", "max_updates", cfg.stop.max_updates);
  }

  r.finish();
  cfg.validate();
  return cfg;
}

inline void ExperimentConfig::validate() const {
  std::vector<std::string> problems;
  auto complain = [&](const std::string& p) { problems.push_back(p); };

  if (data.vocab < 2) complain("data.vocab: must be >= 2");
  if (data.n_sentences < 1) complain("data.n_sentences: must be >= 1");
  if (data.len_min < 1 || data.len_min > data.len_max)
    complain("data.len_min/len_max: need 1 <= len_min <= len_max");

  if (model.kind != ModelKind::gru_lm) {
    complain("model.kind: experiment runs use gru_lm; linear_regression and "
             "mlp_classifier are covered by the gradcheck command");
  } else {
    if (model.vocab != data.vocab)
      complain("model.vocab: must equal data.vocab for gru_lm runs");
    if (model.embed_dim < 1 || model.hidden < 1)
      complain("model.embed_dim/hidden: must be >= 1");
  }

  if (batch.word_budget < 1) complain("batch.word_budget: must be >= 1");
  if (batch.sort_window < 1) complain("batch.sort_window: must be >= 1");

  if (train.workers < 1) complain("train.workers: must be >= 1");
  if (train.tau < 1) complain("train.tau: must be >= 1");
  if (train.mode == TrainMode::sync && local_opt.window != 0)
    complain("local_opt.window: local optimizers are an async-mode feature; "
             "set window to 0 for sync runs");
  if (train.mode == TrainMode::sync && sim.mode == SimMode::concurrent)
    complain("sim.mode: concurrent execution applies to async runs only");

  if (!(optimizer.base_lr > 0)) complain("optimizer.base_lr: must be > 0");
  if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1))
    complain("optimizer.beta1: must be in [0, 1)");
  if (!(optimizer.beta2 >= 0 && optimizer.beta2 < 1))
    complain("optimizer.beta2: must be in [0, 1)");
  if (!(optimizer.eps > 0)) complain("optimizer.eps: must be > 0");

  if (schedule.warmup_steps < 0) complain("schedule.warmup_steps: must be >= 0");
  if (!(schedule.beta1_after >= 0 && schedule.beta1_after < 1))
    complain("schedule.beta1_after: must be in [0, 1)");
  if (schedule.beta1_switch_step < 0) complain("schedule.beta1_switch_step: must be >= 0");
  if (local_opt.window < 0) complain("local_opt.window: must be >= 0");

  if (!(sim.tokens_per_sec > 0)) complain("sim.tokens_per_sec: must be > 0");
  if (sim.push_overhead_sec < 0) complain("sim.push_overhead_sec: must be >= 0");
  if (sim.jitter < 0 || sim.jitter > 1) complain("sim.jitter: must be in [0, 1]");

  if (stop.patience < 1) complain("stop.patience: must be >= 1");
  if (stop.eval_every_updates < 1) complain("stop.eval_every_updates: must be >= 1");
  if (stop.min_delta < 0) complain("stop.min_delta: must be >= 0");
  if (stop.target_ce < 0) complain("stop.target_ce: must be >= 0");
  if (stop.max_updates < 0) complain("stop.max_updates: must be >= 0");

  if (!problems.empty()) throw ConfigError(problems);
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file: " + path});
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError({std::string("config is not valid JSON: ") + e.what()});
  }
  return from_json(j);
}

inline nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["experiment"]["name"] = name;
  j["data"] = {{"seed", data.seed},       {"n_sentences", data.n_sentences},
               {"vocab", data.vocab},     {"len_min", data.len_min},
               {"len_max", data.len_max}, {"pattern", to_string(data.pattern)}};
  j["model"] = {{"kind", to_string(model.kind)}};
  if (model.kind == ModelKind::gru_lm) {
    j["model"]["vocab"] = model.vocab;
    j["model"]["embed_dim"] = model.embed_dim;
    j["model"]["hidden"] = model.hidden;
  } else if (model.kind == ModelKind::mlp_classifier) {
    j["model"]["in_dim"] = model.in_dim;
    j["model"]["hidden"] = model.hidden;
    j["model"]["classes"] = model.classes;
  } else {
    j["model"]["in_dim"] = model.in_dim;
  }
  j["batch"] = {{"word_budget", batch.word_budget}, {"sort_window", batch.sort_window}};
  j["train"] = {{"workers", train.workers},
                {"tau", train.tau},
                {"mode", train.mode == TrainMode::async ? "async" : "sync"},
                {"lr_mode", train.lr_mode == LrMode::mean_tokens ? "mean_tokens" : "sum"}};
  j["optimizer"] = {{"base_lr", optimizer.base_lr},
                    {"beta1", optimizer.beta1},
                    {"beta2", optimizer.beta2},
                    {"eps", optimizer.eps}};
  j["schedule"] = {{"warmup_steps", schedule.warmup_steps},
                   {"cooldown", schedule.cooldown == Cooldown::none ? "none" : "inv_sqrt"},
                   {"beta1_after", schedule.beta1_after},
                   {"beta1_switch_step", schedule.beta1_switch_step}};
  j["local_opt"] = {{"window", local_opt.window}};
  j["sim"] = {{"mode", sim.mode == SimMode::deterministic ? "deterministic" : "concurrent"},
              {"tokens_per_sec", sim.tokens_per_sec},
              {"push_overhead_sec", sim.push_overhead_sec},
              {"jitter", sim.jitter},
              {"seed", sim.seed}};
  j["stop"] = {{"patience", stop.patience},
               {"eval_every_updates", stop.eval_every_updates},
               {"min_delta", stop.min_delta},
               {"target_ce", stop.target_ce},
               {"max_updates", stop.max_updates}};
  return j;
}

}  // namespace asgd
