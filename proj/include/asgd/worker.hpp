// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "asgd/models.hpp"
#include "asgd/optim.hpp"
#include "asgd/pserver.hpp"
#include "asgd/schedules.hpp"

namespace asgd {

/// Per-worker training state: a full local replica, a local Adam instance
/// used only inside the warmup window, and the running tau-group
/// accumulator.
struct WorkerState {
  int id = 0;
  ParamVector local_params;
  AdamState local_adam;
  GradAccumulator acc;
  long microbatches_seen = 0;
  long u_pull = 0;

  WorkerState(int worker_id, LayoutPtr layout)
      : id(worker_id),
        local_params(layout),
        local_adam(AdamState::sized(layout->total_len())),
        acc(std::move(layout)) {}
};

/// Result of the compute half of one tau-group: the accumulator lives in
/// the WorkerState; this carries the bookkeeping for the later push.
struct PendingGroup {
  long u_pull = 0;
  double loss_sum = 0;
  long tokens = 0;
  int local_steps = 0;
};

struct GroupReport {
  double loss_sum = 0;
  long tokens = 0;
  long staleness = 0;
  int local_steps = 0;
  PushRecord push;
};

/// Pulls a snapshot, computes the group's tau micro-batch gradients against
/// it, and interleaves local-optimizer steps (replica update plus Hogwild
/// write of the own-shard slice) while the per-worker window is open. No
/// local step follows the tau-th micro-batch: the next pull would discard
/// it from the replica anyway.
///
/// Local steps consume the current micro-batch gradient, not the running
/// accumulator, and use the schedule at t = u_pull + 1 with the global
/// learning rate lowered by tau.
inline PendingGroup start_group(WorkerState& w, const ModelSpec& spec,
                                std::span<const Batch> batches, GlobalStore& store,
                                const TrainSchedule& sched, int tau,
                                const AdamConsts& consts) {
  if (tau < 1) throw std::invalid_argument("tau must be >= 1");
  if (static_cast<int>(batches.size()) != tau)
    throw std::invalid_argument("group needs exactly tau batches");

  auto [snapshot, u_pull] = store.pull();
  w.local_params = std::move(snapshot);  // local divergences are lost here
  w.u_pull = u_pull;
  w.acc.reset();

  // First group past the window: drop the local state for good.
  if (w.local_adam.size() != 0 && !local_opt_enabled(sched, w.microbatches_seen))
    w.local_adam = AdamState::sized(0);

  PendingGroup pending;
  pending.u_pull = u_pull;

  const std::size_t own_start = store.shards().start(w.id);
  const std::size_t own_end = store.shards().end(w.id);
  const long t_global = u_pull + 1;

  for (int j = 1; j <= tau; ++j) {
    const Batch& batch = batches[static_cast<std::size_t>(j - 1)];
    auto bw = backward(spec, w.local_params, batch);
    w.acc.add(bw.grad, bw.tokens);
    pending.loss_sum += bw.loss;
    pending.tokens += bw.tokens;

    if (j < tau && local_opt_enabled(sched, w.microbatches_seen)) {
      ParamVector local_grad = std::move(bw.grad);
      if (sched.lr_mode == LrMode::mean_tokens) {
        const real inv = real(1) / static_cast<real>(bw.tokens);
        for (auto& g : local_grad.values()) g *= inv;
      }
      const double lr_global = scaled_lr(lr_at(sched, t_global), tau, sched.lr_mode);
      const HyperParams hp{static_cast<real>(local_lr(lr_global, tau)),
                           static_cast<real>(beta1_at(sched, t_global)),
                           static_cast<real>(consts.beta2),
                           static_cast<real>(consts.eps)};
      std::vector<real> own_before = range_read(w.local_params, own_start, own_end);
      adam_step(w.local_params, local_grad, w.local_adam, hp);
      for (std::size_t k = 0; k < own_before.size(); ++k)
        own_before[k] = w.local_params[own_start + k] - own_before[k];
      store.local_shard_write(w.id, own_before);
      pending.local_steps += 1;
    }
    w.microbatches_seen += 1;
  }
  return pending;
}

/// Pushes the accumulated group to the store. Split from start_group so a
/// simulator can place the pull/compute and the push at different instants.
inline GroupReport finish_group(WorkerState& w, const PendingGroup& pending,
                                GlobalStore& store, const TrainSchedule& sched,
                                int tau, double sim_time) {
  GroupReport report;
  report.loss_sum = pending.loss_sum;
  report.tokens = pending.tokens;
  report.local_steps = pending.local_steps;
  report.push = store.push_group(w.acc, pending.u_pull, sched, tau, w.id, sim_time);
  report.staleness = report.push.staleness;
  return report;
}

/// The whole tau-group algorithm in one call: pull, compute, push.
inline GroupReport run_group(WorkerState& w, const ModelSpec& spec,
                             std::span<const Batch> batches, GlobalStore& store,
                             const TrainSchedule& sched, int tau,
                             const AdamConsts& consts, double sim_time = 0) {
  const PendingGroup pending = start_group(w, spec, batches, store, sched, tau, consts);
  return finish_group(w, pending, store, sched, tau, sim_time);
}

}  // namespace asgd
