// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace asgd {

enum class Cooldown { none, inv_sqrt };

/// How the optimizer consumes an accumulated gradient. mean_tokens divides
/// the sum by the group's token count and scales the learning rate linearly
/// with the group size; sum applies the raw sum, which self-scales.
enum class LrMode { mean_tokens, sum };

/// All time-varying hyperparameters for one training run: learning-rate
/// warmup and cooldown, the beta1 (momentum) cooldown switch, and the
/// per-worker window during which local optimizers run.
struct TrainSchedule {
  double base_lr = 0.00045;
  long warmup_steps = 300;
  Cooldown cooldown = Cooldown::none;
  double beta1_before = 0.9;
  double beta1_after = 0.5;
  long beta1_switch_step = 1000;
  long local_opt_window = 400;  // micro-batches per worker
  LrMode lr_mode = LrMode::mean_tokens;

  void validate() const {
    if (!(base_lr > 0)) throw std::invalid_argument("base_lr must be > 0");
    if (warmup_steps < 0) throw std::invalid_argument("warmup_steps must be >= 0");
    if (!(beta1_before >= 0 && beta1_before < 1))
      throw std::invalid_argument("beta1_before must be in [0, 1)");
    if (!(beta1_after >= 0 && beta1_after < 1))
      throw std::invalid_argument("beta1_after must be in [0, 1)");
    if (local_opt_window < 0) throw std::invalid_argument("local_opt_window must be >= 0");
  }
};

/// Learning rate at global step t (t >= 1). Linear warmup to base_lr over
/// warmup_steps, then flat or inverse-square-root decay normalized so
/// lr(warmup_steps) == base_lr exactly.
inline double lr_at(const TrainSchedule& s, long t) {
  if (t < 1) throw std::invalid_argument("step count starts at 1");
  const double w = static_cast<double>(std::max(s.warmup_steps, 1L));
  const double td = static_cast<double>(t);
  if (s.cooldown == Cooldown::inv_sqrt) {
    return s.base_lr * std::sqrt(w) *
           std::min(1.0 / std::sqrt(td), td / (w * std::sqrt(w)));
  }
  return s.base_lr * std::min(1.0, td / w);
}

inline double beta1_at(const TrainSchedule& s, long t) {
  if (t < 1) throw std::invalid_argument("step count starts at 1");
  return t < s.beta1_switch_step ? s.beta1_before : s.beta1_after;
}

/// True while a worker that has seen `worker_microbatches_seen` micro-batches
/// is still inside the local-optimizer warmup window.
inline bool local_opt_enabled(const TrainSchedule& s, long worker_microbatches_seen) {
  if (worker_microbatches_seen < 0) throw std::invalid_argument("count must be >= 0");
  return worker_microbatches_seen < s.local_opt_window;
}

/// Linear learning-rate scaling for a tau-times larger effective batch.
/// Under sum reduction the gradient magnitude already grows with the group,
/// so no extra factor is applied.
inline double scaled_lr(double base_lr, long tau, LrMode mode) {
  if (tau < 1) throw std::invalid_argument("tau must be >= 1");
  return mode == LrMode::mean_tokens ? base_lr * static_cast<double>(tau) : base_lr;
}

/// Local optimizers run on tau-times smaller batches than the global one,
/// so they get a tau-times lower learning rate.
inline double local_lr(double global_lr_at_t, long tau) {
  if (tau < 1) throw std::invalid_argument("tau must be >= 1");
  return global_lr_at_t / static_cast<double>(tau);
}

}  // namespace asgd
