// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <thread>
#include <vector>

#include "asgd/pserver.hpp"
#include "asgd/rng.hpp"
#include "asgd/worker.hpp"

namespace asgd {

/// Compute/communication cost model behind the simulated clock. jitter is a
/// multiplicative noise amount in [0, 1]; the realized factor is log-uniform
/// in [1/(1+jitter), 1+jitter], so always within [0.5, 2].
struct CostModel {
  double tokens_per_sec = 10000;
  double push_overhead_sec = 0.05;
  double jitter = 0;

  void validate() const {
    if (!(tokens_per_sec > 0)) throw std::invalid_argument("tokens_per_sec must be > 0");
    if (push_overhead_sec < 0) throw std::invalid_argument("push_overhead_sec must be >= 0");
    if (jitter < 0 || jitter > 1) throw std::invalid_argument("jitter must be in [0, 1]");
  }
};

/// Simulated seconds one tau-group takes: compute time for its tokens
/// (jittered per step) plus a flat push/pull overhead.
inline double group_duration(const CostModel& cm, long group_tokens,
                             std::uint64_t seed, long step) {
  cm.validate();
  if (group_tokens <= 0) throw std::invalid_argument("group_tokens must be > 0");
  double factor = 1.0;
  if (cm.jitter > 0) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(step)));
    const double u = 2.0 * rng.next_double() - 1.0;
    factor = std::exp(u * std::log1p(cm.jitter));
  }
  return static_cast<double>(group_tokens) / cm.tokens_per_sec * factor +
         cm.push_overhead_sec;
}

/// The next tau batches for one worker.
struct GroupTask {
  std::vector<Batch> batches;
  long tokens = 0;
};

using FeedFn = std::function<GroupTask(int worker)>;
/// Called after every completed push; return false to stop the run.
using PushHook = std::function<bool(const GroupReport&)>;

struct SimParams {
  int n_workers = 1;
  int tau = 1;
  CostModel cost;
  std::uint64_t seed = 0;
  bool concurrent = false;
};

namespace detail {

struct SimWorkerCtx {
  WorkerState state;
  PendingGroup pending;
  long groups_started = 0;

  SimWorkerCtx(int id, LayoutPtr layout) : state(id, std::move(layout)) {}
};

}  // namespace detail

/// Deterministic discrete-event loop. A worker's pull, gradient computation
/// and local-optimizer writes happen atomically when its group starts; the
/// push lands one group_duration later, so staleness reflects exactly the
/// pushes other workers completed in between. Events are ordered by
/// (time, worker id), which makes the whole run a pure function of seeds.
inline std::vector<PushRecord> run_sim_deterministic(
    const ModelSpec& spec, GlobalStore& store, const TrainSchedule& sched,
    const AdamConsts& consts, const SimParams& params, const FeedFn& feed,
    const PushHook& on_push) {
  struct Event {
    double time;
    int worker;
    bool operator>(const Event& o) const {
      if (time != o.time) return time > o.time;
      return worker > o.worker;
    }
  };
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue;

  std::vector<detail::SimWorkerCtx> ctx;
  ctx.reserve(static_cast<std::size_t>(params.n_workers));
  for (int w = 0; w < params.n_workers; ++w) ctx.emplace_back(w, store.layout());

  auto begin_group = [&](int w, double now) {
    auto& c = ctx[static_cast<std::size_t>(w)];
    GroupTask task = feed(w);
    c.pending = start_group(c.state, spec, task.batches, store, sched, params.tau, consts);
    const double dur = group_duration(params.cost, task.tokens,
                                      derive_seed(params.seed, static_cast<std::uint64_t>(w)),
                                      c.groups_started);
    c.groups_started += 1;
    queue.push({now + dur, w});
  };

  for (int w = 0; w < params.n_workers; ++w) begin_group(w, 0.0);

  while (!queue.empty()) {
    const Event ev = queue.top();
    queue.pop();
    auto& c = ctx[static_cast<std::size_t>(ev.worker)];
    const GroupReport report =
        finish_group(c.state, c.pending, store, sched, params.tau, ev.time);
    if (!on_push(report)) break;
    begin_group(ev.worker, ev.time);
  }
  return store.push_log();
}

/// Real-thread mode exercising the store's Hogwild contract. Each worker
/// accumulates its own virtual clock from the same cost model, so N=1
/// reproduces the deterministic run exactly; for N>1 the interleaving is
/// whatever the OS provides and only invariants are checked.
inline std::vector<PushRecord> run_sim_concurrent(
    const ModelSpec& spec, GlobalStore& store, const TrainSchedule& sched,
    const AdamConsts& consts, const SimParams& params, const FeedFn& feed,
    const PushHook& on_push) {
  std::atomic<bool> stop{false};
  std::mutex feed_mu, hook_mu;

  auto worker_loop = [&](int w) {
    detail::SimWorkerCtx c(w, store.layout());
    double clock = 0;
    while (!stop.load(std::memory_order_acquire)) {
      GroupTask task;
      {
        std::lock_guard<std::mutex> lk(feed_mu);
        task = feed(w);
      }
      c.pending = start_group(c.state, spec, task.batches, store, sched, params.tau, consts);
      clock += group_duration(params.cost, task.tokens,
                              derive_seed(params.seed, static_cast<std::uint64_t>(w)),
                              c.groups_started);
      c.groups_started += 1;
      const GroupReport report =
          finish_group(c.state, c.pending, store, sched, params.tau, clock);
      std::lock_guard<std::mutex> lk(hook_mu);
      if (!on_push(report)) {
        stop.store(true, std::memory_order_release);
        break;
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(params.n_workers));
  for (int w = 0; w < params.n_workers; ++w) threads.emplace_back(worker_loop, w);
  for (auto& t : threads) t.join();
  return store.push_log();
}

inline std::vector<PushRecord> run_sim(const ModelSpec& spec, GlobalStore& store,
                                       const TrainSchedule& sched,
                                       const AdamConsts& consts,
                                       const SimParams& params, const FeedFn& feed,
                                       const PushHook& on_push) {
  if (params.n_workers < 1) throw std::invalid_argument("n_workers must be >= 1");
  if (params.tau < 1) throw std::invalid_argument("tau must be >= 1");
  params.cost.validate();
  return params.concurrent
             ? run_sim_concurrent(spec, store, sched, consts, params, feed, on_push)
             : run_sim_deterministic(spec, store, sched, consts, params, feed, on_push);
}

struct StalenessStats {
  double mean = 0;
  long max = 0;
  std::map<long, long> histogram;
};

inline StalenessStats staleness_stats(const std::vector<PushRecord>& log) {
  if (log.empty()) throw std::invalid_argument("empty push log");
  StalenessStats st;
  double total = 0;
  for (const auto& rec : log) {
    total += static_cast<double>(rec.staleness);
    st.max = std::max(st.max, rec.staleness);
    st.histogram[rec.staleness] += 1;
  }
  st.mean = total / static_cast<double>(log.size());
  return st;
}

/// Source tokens pushed within [0, horizon] simulated seconds, per second.
inline double wps(const std::vector<PushRecord>& log, double horizon) {
  if (!(horizon > 0)) throw std::invalid_argument("horizon must be > 0");
  long tokens = 0;
  for (const auto& rec : log)
    if (rec.sim_time <= horizon) tokens += rec.tokens;
  return static_cast<double>(tokens) / horizon;
}

inline void write_push_log_csv(std::ostream& os, const std::vector<PushRecord>& log) {
  const auto old_precision = os.precision(17);
  os << "push_index,worker,sim_time,u_pull,u_apply,staleness,tokens\n";
  for (const auto& r : log) {
    os << r.push_index << ',' << r.worker << ',' << r.sim_time << ',' << r.u_pull
       << ',' << r.u_apply << ',' << r.staleness << ',' << r.tokens << '\n';
  }
  os.precision(old_precision);
}

}  // namespace asgd
