// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "asgd/config.hpp"
#include "asgd/datagen.hpp"
#include "asgd/models.hpp"
#include "asgd/pserver.hpp"
#include "asgd/sim.hpp"
#include "asgd/worker.hpp"

namespace asgd {

/// Validation cross-entropy per token: summed forward loss over the batches
/// divided by their total token count. Pure in the parameters.
inline double evaluate(const ModelSpec& spec, const ParamVector& params,
                       const std::vector<Batch>& valid_batches) {
  if (valid_batches.empty()) throw std::invalid_argument("empty validation set");
  double loss = 0;
  long tokens = 0;
  for (const auto& b : valid_batches) {
    const auto r = forward_loss(spec, params, b);
    loss += r.loss;
    tokens += r.tokens;
  }
  return loss / static_cast<double>(tokens);
}

/// Stall rule: an evaluation stalls when it fails to improve on the best CE
/// seen before it (improvement means dropping below best - min_delta).
/// Stops once the last `patience` evaluations are all stalls.
inline bool should_stop(const std::vector<double>& history, int patience,
                        double min_delta = 0) {
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  double best = std::numeric_limits<double>::infinity();
  int trailing_stalls = 0;
  for (double ce : history) {
    if (ce < best - min_delta) {
      best = ce;
      trailing_stalls = 0;
    } else {
      trailing_stalls += 1;
    }
  }
  return trailing_stalls >= patience;
}

/// One metrics record per evaluation.
struct MetricsRecord {
  double sim_time = 0;
  double wall_time = 0;
  long global_updates = 0;
  double epoch = 0;
  long words_processed = 0;
  double train_ce_per_token = 0;
  double valid_ce_per_token = 0;
  double wps = 0;
  double mean_staleness = 0;

  nlohmann::json to_json() const {
    return {{"sim_time", sim_time},
            {"wall_time", wall_time},
            {"global_updates", global_updates},
            {"epoch", epoch},
            {"words_processed", words_processed},
            {"train_ce_per_token", train_ce_per_token},
            {"valid_ce_per_token", valid_ce_per_token},
            {"wps", wps},
            {"mean_staleness", mean_staleness}};
  }
};

struct RunSummary {
  std::string name;
  std::string status;  // early_stop | max_updates | stopped
  double sim_time = 0;
  long global_updates = 0;
  long words_processed = 0;
  double epochs = 0;
  double final_valid_ce = 0;
  double best_valid_ce = 0;
  double time_to_target = -1;  // -1 when no target or never reached
  double wps = 0;
  double mean_staleness = 0;
  double entropy_floor = 0;
};

struct RunResult {
  ParamVector final_params;
  std::vector<MetricsRecord> metrics;
  std::vector<PushRecord> push_log;
  RunSummary summary;
};

namespace detail {

/// Round-robin split of the packed-batch stream: worker w's k-th group pulls
/// batches at global indices (k*tau + j)*N + w of the concatenated epoch
/// streams. Epoch orders are seeded permutations derived from the data seed.
class RoundRobinFeed {
 public:
  RoundRobinFeed(const Corpus& corpus, const PackedBatches& packed, int n_workers,
                 int tau, std::uint64_t seed)
      : corpus_(corpus), packed_(packed), n_workers_(n_workers), tau_(tau),
        seed_(seed), cursor_(static_cast<std::size_t>(n_workers), 0) {}

  GroupTask operator()(int worker) {
    GroupTask task;
    auto& k = cursor_[static_cast<std::size_t>(worker)];
    for (int j = 0; j < tau_; ++j) {
      const long g = (k * tau_ + j) * n_workers_ + worker;
      task.batches.push_back(materialize(batch_index(g)));
      task.tokens += task.batches.back().token_count();
    }
    k += 1;
    return task;
  }

 private:
  std::size_t batch_index(long global) {
    const long per_epoch = static_cast<long>(packed_.batches.size());
    const long epoch = global / per_epoch;
    const long pos = global % per_epoch;
    while (static_cast<long>(orders_.size()) <= epoch) {
      orders_.push_back(epoch_stream(
          packed_, derive_seed(derive_seed(seed_, "epoch"),
                               static_cast<std::uint64_t>(orders_.size()))));
    }
    return orders_[static_cast<std::size_t>(epoch)][static_cast<std::size_t>(pos)];
  }

  Batch materialize(std::size_t batch_idx) {
    Batch b;
    for (std::size_t s : packed_.batches[batch_idx].sentence_indices)
      b.seqs.push_back(corpus_.sentences[s]);
    return b;
  }

  const Corpus& corpus_;
  const PackedBatches& packed_;
  int n_workers_;
  int tau_;
  std::uint64_t seed_;
  std::vector<long> cursor_;
  std::vector<std::vector<std::size_t>> orders_;
};

inline std::vector<Batch> materialize_all(const Corpus& corpus,
                                          const PackedBatches& packed) {
  std::vector<Batch> out;
  out.reserve(packed.batches.size());
  for (const auto& pb : packed.batches) {
    Batch b;
    for (std::size_t s : pb.sentence_indices) b.seqs.push_back(corpus.sentences[s]);
    out.push_back(std::move(b));
  }
  return out;
}

// Shared per-push bookkeeping for both training modes: metrics records,
// early stopping, target tracking.
class RunTracker {
 public:
  RunTracker(const ExperimentConfig& cfg, const ModelSpec& spec,
             const GlobalStore& store, const std::vector<Batch>& valid,
             long corpus_tokens)
      : cfg_(cfg), spec_(spec), store_(store), valid_(valid),
        corpus_tokens_(corpus_tokens),
        wall_start_(std::chrono::steady_clock::now()) {}

  // Returns false once the run should stop.
  bool on_push(const GroupReport& report) {
    if (stopping_) return false;  // late pushes from in-flight concurrent groups
    words_ += report.push.tokens;
    loss_window_ += report.loss_sum;
    tokens_window_ += report.tokens;
    staleness_total_ += static_cast<double>(report.staleness);
    pushes_ += 1;
    sim_time_ = std::max(sim_time_, report.push.sim_time);
    const long u = report.push.u_apply + 1;  // completed updates

    if (u % cfg_.stop.eval_every_updates == 0) evaluate_now(u);
    if (cfg_.stop.max_updates > 0 && u >= cfg_.stop.max_updates && !stopping_) {
      if (history_.empty() || u % cfg_.stop.eval_every_updates != 0) evaluate_now(u);
      status_ = "max_updates";
      stopping_ = true;
    }
    return !stopping_;
  }

  std::vector<MetricsRecord> take_metrics() { return std::move(metrics_); }

  RunSummary summary(double entropy_floor) const {
    RunSummary s;
    s.name = cfg_.name;
    s.status = status_.empty() ? "stopped" : status_;
    s.sim_time = sim_time_;
    s.global_updates = store_.u();
    s.words_processed = words_;
    s.epochs = corpus_tokens_ > 0
                   ? static_cast<double>(words_) / static_cast<double>(corpus_tokens_)
                   : 0;
    s.final_valid_ce = history_.empty() ? 0 : history_.back();
    s.best_valid_ce = best_ce_;
    s.time_to_target = time_to_target_;
    s.wps = sim_time_ > 0 ? static_cast<double>(words_) / sim_time_ : 0;
    s.mean_staleness = pushes_ > 0 ? staleness_total_ / static_cast<double>(pushes_) : 0;
    s.entropy_floor = entropy_floor;
    return s;
  }

 private:
  void evaluate_now(long u) {
    // concurrent pushes can reach the hook out of counter order; records
    // stay monotone in global_updates
    if (u <= last_recorded_u_) return;
    last_recorded_u_ = u;
    const double ce = evaluate(spec_, store_.pull().first, valid_);
    history_.push_back(ce);
    best_ce_ = std::min(best_ce_, ce);
    if (cfg_.stop.target_ce > 0 && time_to_target_ < 0 && ce <= cfg_.stop.target_ce)
      time_to_target_ = sim_time_;

    MetricsRecord rec;
    rec.sim_time = sim_time_;
    rec.wall_time = cfg_.sim.mode == SimMode::deterministic
                        ? 0.0
                        : std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - wall_start_).count();
    rec.global_updates = u;
    rec.epoch = corpus_tokens_ > 0
                    ? static_cast<double>(words_) / static_cast<double>(corpus_tokens_)
                    : 0;
    rec.words_processed = words_;
    rec.train_ce_per_token =
        tokens_window_ > 0 ? loss_window_ / static_cast<double>(tokens_window_) : 0;
    rec.valid_ce_per_token = ce;
    rec.wps = sim_time_ > 0 ? static_cast<double>(words_) / sim_time_ : 0;
    rec.mean_staleness =
        pushes_ > 0 ? staleness_total_ / static_cast<double>(pushes_) : 0;
    metrics_.push_back(rec);
    loss_window_ = 0;
    tokens_window_ = 0;

    if (should_stop(history_, cfg_.stop.patience, cfg_.stop.min_delta)) {
      status_ = "early_stop";
      stopping_ = true;
    }
  }

  const ExperimentConfig& cfg_;
  const ModelSpec& spec_;
  const GlobalStore& store_;
  const std::vector<Batch>& valid_;
  long corpus_tokens_;
  std::chrono::steady_clock::time_point wall_start_;

  std::vector<MetricsRecord> metrics_;
  std::vector<double> history_;
  long last_recorded_u_ = 0;
  double best_ce_ = std::numeric_limits<double>::infinity();
  double time_to_target_ = -1;
  double sim_time_ = 0;
  long words_ = 0;
  double loss_window_ = 0;
  long tokens_window_ = 0;
  double staleness_total_ = 0;
  long pushes_ = 0;
  std::string status_;
  bool stopping_ = false;
};

// Lockstep synchronous baseline: every worker contributes one tau-group per
// step, the summed gradient is applied as one global update, and the step
// costs the slowest worker's duration (idle time under imbalance).
inline void run_sync(const ExperimentConfig& cfg, const ModelSpec& spec,
                     GlobalStore& store, const TrainSchedule& sched,
                     RoundRobinFeed& feed, RunTracker& tracker) {
  const int n = cfg.train.workers;
  const int group_tau = cfg.train.tau * n;
  const CostModel cm = cfg.cost_model();
  double clock = 0;
  std::vector<long> steps(static_cast<std::size_t>(n), 0);

  for (;;) {
    auto [params, u_pull] = store.pull();
    GradAccumulator acc(store.layout());
    double loss_sum = 0;
    double step_duration = 0;
    for (int w = 0; w < n; ++w) {
      GroupTask task = feed(w);
      for (const auto& batch : task.batches) {
        auto bw = backward(spec, params, batch);
        acc.add(bw.grad, bw.tokens);
        loss_sum += bw.loss;
      }
      step_duration = std::max(
          step_duration,
          group_duration(cm, task.tokens,
                         derive_seed(cfg.sim.seed, static_cast<std::uint64_t>(w)),
                         steps[static_cast<std::size_t>(w)]));
      steps[static_cast<std::size_t>(w)] += 1;
    }
    clock += step_duration;
    GroupReport report;
    report.loss_sum = loss_sum;
    report.tokens = acc.tokens;
    report.push = store.push_group(acc, u_pull, sched, group_tau, -1, clock);
    report.staleness = report.push.staleness;
    if (!tracker.on_push(report)) break;
  }
}

}  // namespace detail

/// The analytic per-token entropy floor of the run's validation corpus —
/// the expected CE of the true generating process, and the natural scale
/// for convergence targets.
inline double experiment_entropy_floor(const ExperimentConfig& cfg) {
  const long n_valid = std::max<long>(cfg.data.n_sentences / 10, 1);
  const Corpus valid_corpus =
      gen_corpus(derive_seed(cfg.data.seed, "valid"), n_valid, cfg.data.vocab,
                 cfg.data.len_min, cfg.data.len_max, cfg.data.pattern);
  return corpus_entropy_floor(valid_corpus);
}

/// Runs one experiment: corpus -> packing -> round-robin worker streams ->
/// async simulation or lockstep sync loop, evaluating every
/// eval_every_updates and stopping on the stall rule or the update cap.
inline RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const ModelSpec spec = cfg.model_spec();
  const TrainSchedule sched = cfg.train_schedule();
  sched.validate();

  const Corpus train_corpus =
      gen_corpus(cfg.data.seed, cfg.data.n_sentences, cfg.data.vocab, cfg.data.len_min,
                 cfg.data.len_max, cfg.data.pattern);
  const long n_valid = std::max<long>(cfg.data.n_sentences / 10, 1);
  const Corpus valid_corpus =
      gen_corpus(derive_seed(cfg.data.seed, "valid"), n_valid, cfg.data.vocab,
                 cfg.data.len_min, cfg.data.len_max, cfg.data.pattern);

  const PackedBatches train_packed =
      pack_batches(train_corpus, cfg.batch.word_budget, derive_seed(cfg.data.seed, "pack"),
                   static_cast<std::size_t>(cfg.batch.sort_window));
  const PackedBatches valid_packed =
      pack_batches(valid_corpus, cfg.batch.word_budget, derive_seed(cfg.data.seed, "vpack"),
                   static_cast<std::size_t>(cfg.batch.sort_window));
  const std::vector<Batch> valid_batches =
      detail::materialize_all(valid_corpus, valid_packed);

  const ParamVector init = init_params(spec, derive_seed(cfg.data.seed, "init"));
  GlobalStore store(init, cfg.train.workers, cfg.adam_consts());
  detail::RoundRobinFeed feed(train_corpus, train_packed, cfg.train.workers,
                              cfg.train.tau, cfg.data.seed);
  detail::RunTracker tracker(cfg, spec, store, valid_batches,
                             train_corpus.total_tokens());

  if (cfg.train.mode == TrainMode::sync) {
    detail::run_sync(cfg, spec, store, sched, feed, tracker);
  } else {
    SimParams params{cfg.train.workers, cfg.train.tau, cfg.cost_model(), cfg.sim.seed,
                     cfg.sim.mode == SimMode::concurrent};
    run_sim(spec, store, sched, cfg.adam_consts(), params,
            [&feed](int w) { return feed(w); },
            [&tracker](const GroupReport& r) { return tracker.on_push(r); });
  }

  RunResult result{store.pull().first, tracker.take_metrics(), store.push_log(),
                   tracker.summary(corpus_entropy_floor(valid_corpus))};
  return result;
}

inline void write_metrics_jsonl(std::ostream& os, const std::vector<MetricsRecord>& ms) {
  for (const auto& m : ms) os << m.to_json().dump() << '\n';
}

inline void write_summary_csv(std::ostream& os, const RunSummary& s) {
  const auto old_precision = os.precision(17);
  os << "name,status,sim_time,global_updates,words_processed,epochs,"
        "final_valid_ce,best_valid_ce,time_to_target,wps,mean_staleness,entropy_floor\n"
     << s.name << ',' << s.status << ',' << s.sim_time << ',' << s.global_updates << ','
     << s.words_processed << ',' << s.epochs << ',' << s.final_valid_ce << ','
     << s.best_valid_ce << ',' << s.time_to_target << ',' << s.wps << ','
     << s.mean_staleness << ',' << s.entropy_floor << '\n';
  os.precision(old_precision);
}

inline void write_params_json(std::ostream& os, const ParamVector& params) {
  nlohmann::json j;
  for (const auto& seg : params.layout()->segments())
    j["segments"][seg.name] = {{"offset", seg.offset}, {"length", seg.length}};
  j["values"] = params.values();
  os << j.dump() << '\n';
}

/// Writes metrics.jsonl, summary.csv, pushlog.csv and params.json to out_dir.
inline void write_run_files(const std::filesystem::path& out_dir, const RunResult& r) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream os(out_dir / "metrics.jsonl");
    write_metrics_jsonl(os, r.metrics);
  }
  {
    std::ofstream os(out_dir / "summary.csv");
    write_summary_csv(os, r.summary);
  }
  {
    std::ofstream os(out_dir / "pushlog.csv");
    write_push_log_csv(os, r.push_log);
  }
  {
    std::ofstream os(out_dir / "params.json");
    write_params_json(os, r.final_params);
  }
}

struct GradCheckReport {
  ModelKind kind = ModelKind::linear_regression;
  int instances = 0;
  double tolerance = 0;
  double max_rel_err = 0;
  bool pass = false;
};

/// Central-difference verification of the analytic gradients over seeded
/// random instances. Tolerances: 1e-8 (linear, exact up to rounding for a
/// quadratic loss), 1e-5 (mlp), 1e-4 (gru_lm), all at h = 1e-4 in float64.
inline GradCheckReport run_gradcheck(ModelKind kind, std::uint64_t base_seed,
                                     int instances) {
  ModelSpec spec;
  double tol = 0;
  switch (kind) {
    case ModelKind::linear_regression:
      spec = ModelSpec::linear(3);
      tol = 1e-8;
      break;
    case ModelKind::mlp_classifier:
      spec = ModelSpec::mlp(2, 4, 2);
      tol = 1e-5;
      break;
    case ModelKind::gru_lm:
      spec = ModelSpec::gru(8, 4, 4);
      tol = 1e-4;
      break;
  }
  GradCheckReport report{kind, instances, tol, 0, false};
  for (int i = 0; i < instances; ++i) {
    const auto seed = base_seed + static_cast<std::uint64_t>(i);
    const ParamVector p = init_params(spec, seed);
    // length-5 sequences keep the central-difference cancellation noise
    // well inside the gru tolerance; the other kinds are insensitive
    const Batch b = random_batch(spec, derive_seed(seed, "gradcheck"), 2, 5, 5);
    report.max_rel_err = std::max(report.max_rel_err, grad_check(spec, p, b, 1e-4));
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

struct SweepRow {
  std::string value;
  double sim_time_to_target = -1;
  double final_ce = 0;
  double wps = 0;
  double mean_staleness = 0;
};

/// Reruns the experiment once per value of one dotted config key
/// (e.g. "train.tau"), all other settings and seeds shared.
inline std::vector<SweepRow> sweep(const nlohmann::json& base_config,
                                   const std::string& key,
                                   const std::vector<std::string>& values) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  std::string pointer = "/" + key;
  std::replace(pointer.begin(), pointer.end(), '.', '/');

  std::vector<SweepRow> rows;
  for (const auto& value : values) {
    nlohmann::json j = base_config;
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
      parsed = value;  // plain string value
    }
    try {
      j[nlohmann::json::json_pointer(pointer)] = parsed;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError({"sweep key '" + key + "': " + e.what()});
    }
    const ExperimentConfig cfg = ExperimentConfig::from_json(j);
    const RunResult r = run_experiment(cfg);
    rows.push_back({value, r.summary.time_to_target, r.summary.final_valid_ce,
                    r.summary.wps, r.summary.mean_staleness});
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::string& key,
                            const std::vector<SweepRow>& rows) {
  const auto old_precision = os.precision(17);
  os << key << ",sim_time_to_target,final_valid_ce,wps,mean_staleness\n";
  for (const auto& r : rows) {
    os << r.value << ',';
    if (r.sim_time_to_target >= 0) os << r.sim_time_to_target;
    os << ',' << r.final_ce << ',' << r.wps << ',' << r.mean_staleness << '\n';
  }
  os.precision(old_precision);
}

}  // namespace asgd
