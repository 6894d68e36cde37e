// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "asgd/optim.hpp"
#include "asgd/param_vector.hpp"
#include "asgd/schedules.hpp"

namespace asgd {

/// Contiguous [start, end) ranges assigning the flat parameter vector to N
/// worker-owned shards: boundary i = floor(i * total / N). Empty shards are
/// legal when the model is smaller than the worker count.
struct ShardTable {
  std::vector<std::size_t> bounds;  // N + 1 entries

  static ShardTable split(std::size_t total_len, int n_workers) {
    if (n_workers < 1) throw std::invalid_argument("n_workers must be >= 1");
    ShardTable t;
    t.bounds.resize(static_cast<std::size_t>(n_workers) + 1);
    for (int i = 0; i <= n_workers; ++i)
      t.bounds[static_cast<std::size_t>(i)] =
          static_cast<std::size_t>(i) * total_len / static_cast<std::size_t>(n_workers);
    return t;
  }

  int count() const { return static_cast<int>(bounds.size()) - 1; }
  std::size_t start(int i) const { return bounds[static_cast<std::size_t>(i)]; }
  std::size_t end(int i) const { return bounds[static_cast<std::size_t>(i) + 1]; }
  std::size_t length(int i) const { return end(i) - start(i); }
};

/// beta2/eps are fixed per run; lr and beta1 come from the schedule.
struct AdamConsts {
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Running sum of micro-batch gradients plus token count over one tau-group.
struct GradAccumulator {
  ParamVector sum;
  long tokens = 0;
  int microbatches = 0;

  explicit GradAccumulator(LayoutPtr layout) : sum(std::move(layout)) {}

  void add(const ParamVector& grad, long batch_tokens) {
    require_same_layout(sum, grad);
    axpy_inplace(real(1), grad, sum);
    tokens += batch_tokens;
    microbatches += 1;
  }

  void reset() {
    std::fill(sum.values().begin(), sum.values().end(), real(0));
    tokens = 0;
    microbatches = 0;
  }
};

/// One global group push as recorded by the store.
struct PushRecord {
  long push_index = 0;  // == u_apply
  int worker = 0;       // -1 for synchronous all-reduce steps
  double sim_time = 0;
  long u_pull = 0;
  long u_apply = 0;
  long staleness = 0;  // u_apply - u_pull
  long tokens = 0;
};

/// Sharded authoritative parameter store. Each worker masters one shard;
/// a group push applies the global optimizer shard by shard (serialized per
/// shard); local-optimizer writes land on the owner's shard without touching
/// the group counter or the global Adam state.
///
/// Elements are atomics so the concurrent mode is race-free at element
/// granularity: pulls may observe different shards from different moments
/// (the Hogwild contract), never a torn element. Deterministic mode drives
/// everything from one context, so its snapshots are exactly consistent.
class GlobalStore {
 public:
  GlobalStore(const ParamVector& initial, int n_workers, AdamConsts consts)
      : layout_(initial.layout()),
        len_(initial.size()),
        values_(std::make_unique<std::atomic<real>[]>(initial.size())),
        shards_(ShardTable::split(initial.size(), n_workers)),
        consts_(consts),
        shard_mu_(std::make_unique<std::mutex[]>(static_cast<std::size_t>(n_workers))) {
    for (std::size_t i = 0; i < len_; ++i)
      values_[i].store(initial[i], std::memory_order_relaxed);
    shard_state_.reserve(static_cast<std::size_t>(n_workers));
    for (int s = 0; s < shards_.count(); ++s)
      shard_state_.push_back(AdamState::sized(shards_.length(s)));
  }

  const LayoutPtr& layout() const { return layout_; }
  const ShardTable& shards() const { return shards_; }
  long u() const { return u_.load(std::memory_order_acquire); }

  /// Snapshot of the authoritative parameters plus the group counter
  /// observed at read time.
  std::pair<ParamVector, long> pull() const {
    const long u_pull = u_.load(std::memory_order_acquire);
    ParamVector snap(layout_);
    for (std::size_t i = 0; i < len_; ++i)
      snap[i] = values_[i].load(std::memory_order_relaxed);
    return {std::move(snap), u_pull};
  }

  /// Applies one accumulated tau-group with the global optimizer and logs
  /// the push. The effective gradient is the raw sum (sum mode) or the sum
  /// divided by the group's token count (mean_tokens mode); the learning
  /// rate is the schedule value scaled for the tau-times larger batch.
  PushRecord push_group(const GradAccumulator& acc, long u_pull,
                        const TrainSchedule& sched, int tau, int worker,
                        double sim_time) {
    if (!(*acc.sum.layout() == *layout_))
      throw std::invalid_argument("accumulator layout mismatch");
    if (acc.microbatches != tau)
      throw std::invalid_argument("push_group needs exactly tau accumulated micro-batches");
    if (acc.tokens <= 0) throw std::invalid_argument("group has no tokens");

    ParamVector effective = acc.sum;
    if (sched.lr_mode == LrMode::mean_tokens) {
      const real inv = real(1) / static_cast<real>(acc.tokens);
      for (auto& g : effective.values()) g *= inv;
    }

    for (int s = 0; s < shards_.count(); ++s) {
      std::lock_guard<std::mutex> lock(shard_mu_[static_cast<std::size_t>(s)]);
      AdamState& st = shard_state_[static_cast<std::size_t>(s)];
      const long t_next = static_cast<long>(st.t) + 1;
      const HyperParams hp{
          static_cast<real>(scaled_lr(lr_at(sched, t_next), tau, sched.lr_mode)),
          static_cast<real>(beta1_at(sched, t_next)),
          static_cast<real>(consts_.beta2), static_cast<real>(consts_.eps)};
      detail::adam_apply_ranged(AtomicAccess{values_.get()}, effective.data(), st,
                                hp, shards_.start(s), shards_.end(s));
    }

    std::lock_guard<std::mutex> lock(log_mu_);
    const long u_apply = u_.load(std::memory_order_relaxed);
    u_.store(u_apply + 1, std::memory_order_release);
    PushRecord rec{u_apply, worker, sim_time, u_pull, u_apply, u_apply - u_pull,
                   acc.tokens};
    log_.push_back(rec);
    return rec;
  }

  /// Hogwild write: adds `delta` onto the worker's own shard range.
  /// Element-atomic, unsynchronized with concurrent pulls; advances neither
  /// the group counter nor any global Adam state.
  void local_shard_write(int worker_id, std::span<const real> delta) {
    if (worker_id < 0 || worker_id >= shards_.count())
      throw std::invalid_argument("worker id does not own a shard");
    const std::size_t start = shards_.start(worker_id);
    if (delta.size() != shards_.length(worker_id))
      throw std::invalid_argument("delta length does not match shard length");
    for (std::size_t k = 0; k < delta.size(); ++k)
      values_[start + k].fetch_add(delta[k], std::memory_order_relaxed);
  }

  std::vector<PushRecord> push_log() const {
    std::lock_guard<std::mutex> lock(log_mu_);
    return log_;
  }

  const AdamState& shard_state(int s) const {
    return shard_state_[static_cast<std::size_t>(s)];
  }

 private:
  struct AtomicAccess {
    std::atomic<real>* p;
    real load(std::size_t i) const { return p[i].load(std::memory_order_relaxed); }
    void store(std::size_t i, real x) const { p[i].store(x, std::memory_order_relaxed); }
  };

  LayoutPtr layout_;
  std::size_t len_;
  std::unique_ptr<std::atomic<real>[]> values_;
  ShardTable shards_;
  std::vector<AdamState> shard_state_;
  AdamConsts consts_;
  std::unique_ptr<std::mutex[]> shard_mu_;
  mutable std::mutex log_mu_;
  std::atomic<long> u_{0};
  std::vector<PushRecord> log_;
};

}  // namespace asgd
