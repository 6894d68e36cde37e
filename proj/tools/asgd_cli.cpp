// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner CLI. Exit codes: 0 success, 1 validation error,
// 2 numerical fault, 3 failed check (gradcheck tolerance or similar).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asgd/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitCheckFailed = 3;

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
  const auto cfg = asgd::ExperimentConfig::from_file(config_path);
  const auto result = asgd::run_experiment(cfg);
  const std::filesystem::path out =
      out_dir.empty() ? std::filesystem::path("runs") / cfg.name
                      : std::filesystem::path(out_dir);
  asgd::write_run_files(out, result);
  asgd::write_summary_csv(std::cout, result.summary);
  std::cerr << "wrote " << (out / "metrics.jsonl").string() << ", summary.csv, "
            << "pushlog.csv, params.json\n";
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& key,
              const std::string& values_csv, const std::string& out_file) {
  std::ifstream in(config_path);
  if (!in) throw asgd::ConfigError({"cannot open config file: " + config_path});
  nlohmann::json base;
  in >> base;
  const auto values = split_csv(values_csv);
  const auto rows = asgd::sweep(base, key, values);
  if (!out_file.empty()) {
    std::ofstream os(out_file);
    asgd::write_sweep_csv(os, key, rows);
  }
  asgd::write_sweep_csv(std::cout, key, rows);
  return kExitOk;
}

int cmd_gradcheck(const std::string& model, std::uint64_t seed, int instances) {
  std::vector<asgd::ModelKind> kinds;
  if (model == "all") {
    kinds = {asgd::ModelKind::linear_regression, asgd::ModelKind::mlp_classifier,
             asgd::ModelKind::gru_lm};
  } else if (model == "linear_regression") {
    kinds = {asgd::ModelKind::linear_regression};
  } else if (model == "mlp_classifier") {
    kinds = {asgd::ModelKind::mlp_classifier};
  } else if (model == "gru_lm") {
    kinds = {asgd::ModelKind::gru_lm};
  } else {
    throw asgd::ConfigError(
        {"--model: expected linear_regression|mlp_classifier|gru_lm|all"});
  }
  bool all_pass = true;
  for (const auto kind : kinds) {
    const auto rep = asgd::run_gradcheck(kind, seed, instances);
    std::printf("%-5s %-18s instances=%d max_rel_err=%.3e tolerance=%.0e\n",
                rep.pass ? "PASS" : "FAIL", asgd::to_string(kind), rep.instances,
                rep.max_rel_err, rep.tolerance);
    all_pass = all_pass && rep.pass;
  }
  return all_pass ? kExitOk : kExitCheckFailed;
}

int cmd_pack(long budget, std::uint64_t seed, long n_sentences, int vocab, int len_min,
             int len_max, const std::string& pattern, const std::string& config_path) {
  asgd::Corpus corpus;
  if (!config_path.empty()) {
    const auto cfg = asgd::ExperimentConfig::from_file(config_path);
    corpus = asgd::gen_corpus(cfg.data.seed, cfg.data.n_sentences, cfg.data.vocab,
                              cfg.data.len_min, cfg.data.len_max, cfg.data.pattern);
  } else {
    corpus = asgd::gen_corpus(seed, n_sentences, vocab, len_min, len_max,
                              asgd::markov_pattern_from(pattern));
  }
  const auto packed = asgd::pack_batches(corpus, budget, seed);
  long oversized = 0;
  for (const auto& b : packed.batches) oversized += b.oversized ? 1 : 0;
  std::cout << "batches,mean_batch_words,max_batch_words,oversized,total_tokens\n"
            << packed.batches.size() << ',' << packed.mean_batch_tokens() << ','
            << packed.max_batch_tokens() << ',' << oversized << ','
            << packed.total_tokens() << '\n';
  return kExitOk;
}

int cmd_staleness(const std::string& config_path) {
  const auto cfg = asgd::ExperimentConfig::from_file(config_path);
  const auto result = asgd::run_experiment(cfg);
  const auto stats = asgd::staleness_stats(result.push_log);
  std::cout << "pushes," << result.push_log.size() << "\n"
            << "mean_staleness," << stats.mean << "\n"
            << "max_staleness," << stats.max << "\n";
  for (const auto& [staleness, count] : stats.histogram)
    std::cout << "staleness_" << staleness << "," << count << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale asynchronous SGD laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir, out_file, key, values;
  std::string model = "all", pattern = "peaked";
  std::uint64_t seed = 0;
  int instances = 20;
  long budget = 400, n_sentences = 10000;
  int vocab = 16, len_min = 5, len_max = 20;

  auto* run = app.add_subcommand("run", "run one experiment from a config file");
  run->add_option("--config", config_path, "JSON config path")->required();
  run->add_option("--out", out_dir, "output directory (default runs/<name>)");

  auto* sw = app.add_subcommand("sweep", "rerun one experiment over a config key");
  sw->add_option("--config", config_path, "JSON config path")->required();
  sw->add_option("--key", key, "dotted config key, e.g. train.tau")->required();
  sw->add_option("--values", values, "comma-separated values")->required();
  sw->add_option("--out", out_file, "optional CSV output file");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gc->add_option("--model", model, "linear_regression|mlp_classifier|gru_lm|all");
  gc->add_option("--seed", seed, "base seed (default 0)");
  gc->add_option("--instances", instances, "instances per model kind (default 20)");

  auto* pk = app.add_subcommand("pack", "report token-budget batch packing");
  pk->add_option("--budget", budget, "word budget per batch")->required();
  pk->add_option("--seed", seed, "corpus/packing seed")->required();
  pk->add_flag("--report", "emit the CSV report (default behavior)");
  pk->add_option("--sentences", n_sentences, "corpus size (default 10000)");
  pk->add_option("--vocab", vocab, "vocabulary size (default 16)");
  pk->add_option("--len-min", len_min, "min sentence length (default 5)");
  pk->add_option("--len-max", len_max, "max sentence length (default 20)");
  pk->add_option("--pattern", pattern, "peaked|uniform (default peaked)");
  pk->add_option("--config", config_path, "take corpus settings from a config file");

  auto* st = app.add_subcommand("staleness", "run a config and print staleness stats");
  st->add_option("--config", config_path, "JSON config path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir);
    if (sw->parsed()) return cmd_sweep(config_path, key, values, out_file);
    if (gc->parsed()) return cmd_gradcheck(model, seed, instances);
    if (pk->parsed())
      return cmd_pack(budget, seed, n_sentences, vocab, len_min, len_max, pattern,
                      config_path);
    if (st->parsed()) return cmd_staleness(config_path);
  } catch (const asgd::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kExitValidation;
  } catch (const asgd::NumericalFault& e) {
    std::cerr << "numerical fault: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitOk;
}
