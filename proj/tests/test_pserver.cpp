// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "asgd/pserver.hpp"
#include "asgd/rng.hpp"
#include "support/oracles.hpp"

using namespace asgd;
using test_oracle::rel_err;

namespace {

TrainSchedule flat_sched(double lr, LrMode mode = LrMode::mean_tokens) {
  TrainSchedule s;
  s.base_lr = lr;
  s.warmup_steps = 0;
  s.cooldown = Cooldown::none;
  s.beta1_before = 0.9;
  s.beta1_after = 0.9;
  s.beta1_switch_step = 0;
  s.lr_mode = mode;
  return s;
}

ParamVector make_params(std::size_t n, std::uint64_t seed) {
  auto l = ParamLayout::make({{"w", n}});
  ParamVector p(l);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) p[i] = rng.uniform(-1, 1);
  return p;
}

}  // namespace

TEST_CASE("shard boundaries follow the floor formula") {
  auto t = ShardTable::split(10, 4);
  CHECK(t.bounds == std::vector<std::size_t>{0, 2, 5, 7, 10});

  auto e = ShardTable::split(8, 4);
  for (int i = 0; i < 4; ++i) CHECK(e.length(i) == 2);

  auto s = ShardTable::split(3, 4);
  CHECK(s.bounds == std::vector<std::size_t>{0, 0, 1, 2, 3});
  CHECK(s.length(0) == 0);  // empty shards are legal

  CHECK_THROWS_AS(ShardTable::split(5, 0), std::invalid_argument);
}

TEST_CASE("pull returns the initial state and the observed counter") {
  auto init = make_params(6, 1);
  GlobalStore store(init, 2, {});
  auto [snap, u] = store.pull();
  CHECK(u == 0);
  for (std::size_t i = 0; i < 6; ++i) CHECK(snap[i] == init[i]);

  auto [snap2, u2] = store.pull();
  CHECK(u2 == 0);
  for (std::size_t i = 0; i < 6; ++i) CHECK(snap2[i] == snap[i]);
}

TEST_CASE("push applies the effective gradient and counts groups") {
  auto init = make_params(2, 2);
  const auto layout = init.layout();
  GlobalStore store(init, 1, {});
  auto sched = flat_sched(0.1);

  GradAccumulator acc(layout);
  acc.add(ParamVector(layout, {1.0, 2.0}), 3);
  acc.add(ParamVector(layout, {0.5, 0.5}), 5);
  CHECK(acc.sum[0] == 1.5);
  CHECK(acc.sum[1] == 2.5);
  CHECK(acc.tokens == 8);

  auto rec = store.push_group(acc, 0, sched, 2, 0, 1.25);
  CHECK(rec.u_pull == 0);
  CHECK(rec.u_apply == 0);
  CHECK(rec.staleness == 0);
  CHECK(rec.tokens == 8);
  CHECK(store.u() == 1);

  // oracle: adam on the mean-by-tokens gradient with lr scaled by tau=2
  ParamVector ref = init;
  auto st = AdamState::sized(2);
  ParamVector eff(layout, {1.5 / 8, 2.5 / 8});
  CHECK(eff[0] == doctest::Approx(0.1875).epsilon(1e-15));
  CHECK(eff[1] == doctest::Approx(0.3125).epsilon(1e-15));
  adam_step(ref, eff, st, {0.2, 0.9, 0.999, 1e-8});
  auto [snap, u] = store.pull();
  CHECK(u == 1);
  for (std::size_t i = 0; i < 2; ++i) CHECK(rel_err(snap[i], ref[i]) <= 1e-15);
}

TEST_CASE("push_group validates its accumulator") {
  auto init = make_params(4, 3);
  GlobalStore store(init, 2, {});
  auto sched = flat_sched(0.01);
  GradAccumulator acc(init.layout());
  acc.add(ParamVector(init.layout(), {1, 1, 1, 1}), 2);
  CHECK_THROWS_AS(store.push_group(acc, 0, sched, 2, 0, 0.0), std::invalid_argument);

  GradAccumulator wrong(ParamLayout::make({{"w", 5}}));
  wrong.add(ParamVector(ParamLayout::make({{"w", 5}}), {1, 1, 1, 1, 1}), 2);
  CHECK_THROWS_AS(store.push_group(wrong, 0, sched, 1, 0, 0.0), std::invalid_argument);
}

TEST_CASE("sharded cover equals the unsharded update over many pushes") {
  const std::size_t n = 23;
  auto init = make_params(n, 4);
  auto sched = flat_sched(0.05);
  sched.warmup_steps = 5;  // exercise a varying learning rate too
  Rng rng(9);

  for (int workers : {1, 2, 4, 7}) {
    GlobalStore store(init, workers, {});
    ParamVector ref = init;
    auto ref_state = AdamState::sized(n);
    for (int step = 0; step < 12; ++step) {
      ParamVector g(init.layout());
      for (std::size_t i = 0; i < n; ++i) g[i] = rng.uniform(-1, 1);
      const long toks = 4;
      GradAccumulator acc(init.layout());
      acc.add(g, toks);
      store.push_group(acc, store.u(), sched, 1, step % workers, 0.0);

      ParamVector eff = g;
      for (auto& x : eff.values()) x /= static_cast<real>(toks);
      const long t_next = ref_state.t + 1;
      adam_step(ref, eff, ref_state,
                {static_cast<real>(scaled_lr(lr_at(sched, t_next), 1, sched.lr_mode)),
                 static_cast<real>(beta1_at(sched, t_next)), 0.999, 1e-8});

      auto snap = store.pull().first;
      for (std::size_t i = 0; i < n; ++i) REQUIRE(rel_err(snap[i], ref[i]) <= 1e-15);
      // shard step counters advance together
      for (int s = 0; s < workers; ++s) CHECK(store.shard_state(s).t == step + 1);
    }
    CHECK(store.u() == 12);
  }
}

TEST_CASE("local shard writes hit only the owner's range and not the counter") {
  auto init = make_params(10, 5);
  GlobalStore store(init, 4, {});  // ranges [0,2) [2,5) [5,7) [7,10)

  std::vector<real> zero(3, 0.0);
  store.local_shard_write(1, zero);
  auto [snap, u] = store.pull();
  CHECK(u == 0);
  for (std::size_t i = 0; i < 10; ++i) CHECK(snap[i] == init[i]);

  std::vector<real> delta{0.5, -1.0, 0.25};
  store.local_shard_write(1, delta);
  auto after = store.pull().first;
  CHECK(after[2] == init[2] + 0.5);
  CHECK(after[3] == init[3] - 1.0);
  CHECK(after[4] == init[4] + 0.25);
  for (std::size_t i : {0ul, 1ul, 5ul, 6ul, 7ul, 8ul, 9ul}) CHECK(after[i] == init[i]);
  CHECK(store.u() == 0);
  CHECK(store.shard_state(1).t == 0);

  CHECK_THROWS_AS(store.local_shard_write(1, std::vector<real>{1.0}), std::invalid_argument);
  CHECK_THROWS_AS(store.local_shard_write(7, zero), std::invalid_argument);
}

TEST_CASE("local writes commute with group pushes") {
  // Adam's update delta does not read the parameters, so += delta and a
  // push commute: bitwise on other shards, to rounding on the own shard.
  auto init = make_params(12, 8);
  auto sched = flat_sched(0.05);
  std::vector<real> delta{0.25, -0.5, 0.125};
  ParamVector g(init.layout());
  Rng rng(21);
  for (std::size_t i = 0; i < 12; ++i) g[i] = rng.uniform(-1, 1);
  GradAccumulator acc(init.layout());
  acc.add(g, 4);

  GlobalStore wp(init, 4, {});  // shard 1 owns [3, 6)
  wp.local_shard_write(1, delta);
  wp.push_group(acc, 0, sched, 1, 0, 0.0);

  GlobalStore pw(init, 4, {});
  pw.push_group(acc, 0, sched, 1, 0, 0.0);
  pw.local_shard_write(1, delta);

  auto a = wp.pull().first;
  auto b = pw.pull().first;
  for (std::size_t i = 0; i < 12; ++i) {
    if (i >= 3 && i < 6)
      CHECK(rel_err(a[i], b[i]) <= 1e-15);
    else
      CHECK(a[i] == b[i]);
  }
}

TEST_CASE("single worker equivalence: store pushes replay a sequential Adam loop") {
  const std::size_t n = 8;
  auto init = make_params(n, 6);
  auto sched = flat_sched(0.02);
  GlobalStore store(init, 1, {});

  std::vector<double> theta(init.values().begin(), init.values().end());
  test_oracle::VectorAdam oracle(n);
  Rng rng(13);

  for (int step = 0; step < 200; ++step) {
    ParamVector g(init.layout());
    for (std::size_t i = 0; i < n; ++i) g[i] = rng.uniform(-2, 2);
    const long toks = 5;
    GradAccumulator acc(init.layout());
    acc.add(g, toks);
    auto [snap, u_pull] = store.pull();
    store.push_group(acc, u_pull, sched, 1, 0, 0.0);

    std::vector<double> eff(n);
    for (std::size_t i = 0; i < n; ++i) eff[i] = g[i] / static_cast<double>(toks);
    oracle.step(theta, eff, lr_at(sched, step + 1), beta1_at(sched, step + 1), 0.999, 1e-8);
  }
  auto snap = store.pull().first;
  for (std::size_t i = 0; i < n; ++i) REQUIRE(rel_err(snap[i], theta[i]) <= 1e-12);
}
