// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>
#include <vector>

#include "asgd/sim.hpp"
#include "support/oracles.hpp"

using namespace asgd;
using test_oracle::rel_err;

namespace {

TrainSchedule tiny_sched() {
  TrainSchedule s;
  s.base_lr = 0.01;
  s.warmup_steps = 0;
  s.cooldown = Cooldown::none;
  s.beta1_before = 0.9;
  s.beta1_after = 0.9;
  s.beta1_switch_step = 0;
  s.local_opt_window = 0;
  s.lr_mode = LrMode::mean_tokens;
  return s;
}

// Infinite feed cycling over fixed-size batches of `tokens_per_batch`
// tokens each; every worker consumes its own round-robin slice.
struct CyclicFeed {
  ModelSpec spec;
  int tau;
  int n_workers;
  long tokens_per_batch;
  std::vector<Batch> pool;
  std::vector<long> cursor;

  CyclicFeed(const ModelSpec& sp, int tau_, int workers, long toks)
      : spec(sp), tau(tau_), n_workers(workers), tokens_per_batch(toks),
        cursor(static_cast<std::size_t>(workers), 0) {
    for (std::uint64_t s = 0; s < 16; ++s) {
      Batch b;
      b.seqs.push_back(std::vector<int>(static_cast<std::size_t>(toks)));
      Rng rng(s);
      for (auto& t : b.seqs[0]) t = static_cast<int>(rng.below(spec.vocab));
      pool.push_back(std::move(b));
    }
  }

  GroupTask operator()(int w) {
    GroupTask task;
    for (int j = 0; j < tau; ++j) {
      const long g = cursor[static_cast<std::size_t>(w)]++;
      const auto idx = static_cast<std::size_t>((g * n_workers + w) % 16);
      task.batches.push_back(pool[idx]);
      task.tokens += pool[idx].token_count();
    }
    return task;
  }
};

}  // namespace

TEST_CASE("group_duration matches the pinned cost model") {
  CostModel cm{10000, 0.05, 0};
  CHECK(group_duration(cm, 2500, 0, 0) == doctest::Approx(0.30).epsilon(1e-12));
  CHECK(group_duration(cm, 5000, 0, 0) == doctest::Approx(0.55).epsilon(1e-12));
  CHECK(group_duration(cm, 2500, 7, 3) == group_duration(cm, 2500, 7, 3));
  CHECK_THROWS_AS(group_duration(cm, 0, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(group_duration(CostModel{0, 0.05, 0}, 100, 0, 0), std::invalid_argument);
}

TEST_CASE("jitter stays within the documented factor range") {
  CostModel cm{10000, 0.0, 1.0};
  bool any_off_one = false;
  for (long step = 0; step < 200; ++step) {
    const double d = group_duration(cm, 10000, 3, step);
    CHECK(d >= 0.5);
    CHECK(d <= 2.0);
    any_off_one |= (d != 1.0);
  }
  CHECK(any_off_one);
}

TEST_CASE("single worker: pushes in order, staleness zero") {
  auto spec = ModelSpec::gru(6, 3, 4);
  auto init = init_params(spec, 1);
  GlobalStore store(init, 1, {});
  SimParams params{1, 1, CostModel{10000, 0.05, 0}, 0, false};
  CyclicFeed feed(spec, 1, 1, 10);
  int pushes = 0;
  auto log = run_sim(spec, store, tiny_sched(), {}, params, feed,
                     [&](const GroupReport&) { return ++pushes < 20; });
  REQUIRE(log.size() == 20);
  for (std::size_t i = 0; i < log.size(); ++i) {
    CHECK(log[i].staleness == 0);
    CHECK(log[i].push_index == static_cast<long>(i));
    CHECK(log[i].worker == 0);
  }
  // pushes land at multiples of the fixed group duration
  const double d = group_duration(params.cost, 10, 0, 0);
  for (std::size_t i = 0; i < log.size(); ++i)
    CHECK(log[i].sim_time == doctest::Approx((static_cast<double>(i) + 1) * d).epsilon(1e-9));
}

TEST_CASE("four equal workers settle into staleness N-1") {
  auto spec = ModelSpec::gru(6, 3, 4);
  auto init = init_params(spec, 2);
  GlobalStore store(init, 4, {});
  SimParams params{4, 1, CostModel{10000, 0.05, 0}, 0, false};
  CyclicFeed feed(spec, 1, 4, 10);
  int pushes = 0;
  auto log = run_sim(spec, store, tiny_sched(), {}, params, feed,
                     [&](const GroupReport&) { return ++pushes < 40; });
  REQUIRE(log.size() == 40);
  for (std::size_t i = 4; i < log.size(); ++i) CHECK(log[i].staleness == 3);
  auto stats = staleness_stats(std::vector<PushRecord>(log.begin() + 4, log.end()));
  CHECK(stats.mean == doctest::Approx(3.0));
  CHECK(stats.max == 3);
}

TEST_CASE("fixed seeds reproduce a bit-identical event log") {
  auto spec = ModelSpec::gru(6, 3, 4);
  auto run_once = [&] {
    auto init = init_params(spec, 3);
    GlobalStore store(init, 4, {});
    SimParams params{4, 2, CostModel{9000, 0.03, 0.5}, 17, false};
    CyclicFeed feed(spec, 2, 4, 8);
    int pushes = 0;
    auto log = run_sim(spec, store, tiny_sched(), {}, params, feed,
                       [&](const GroupReport&) { return ++pushes < 30; });
    return std::make_pair(log, store.pull().first);
  };
  auto [log1, p1] = run_once();
  auto [log2, p2] = run_once();
  REQUIRE(log1.size() == log2.size());
  for (std::size_t i = 0; i < log1.size(); ++i) {
    CHECK(log1[i].sim_time == log2[i].sim_time);
    CHECK(log1[i].worker == log2[i].worker);
    CHECK(log1[i].u_pull == log2[i].u_pull);
    CHECK(log1[i].u_apply == log2[i].u_apply);
    CHECK(log1[i].staleness == log2[i].staleness);
    CHECK(log1[i].tokens == log2[i].tokens);
  }
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == p2[i]);
}

TEST_CASE("concurrent mode equals deterministic mode for one worker") {
  auto spec = ModelSpec::gru(6, 3, 4);
  auto run_mode = [&](bool concurrent) {
    auto init = init_params(spec, 4);
    GlobalStore store(init, 1, {});
    SimParams params{1, 2, CostModel{12000, 0.04, 0}, 5, concurrent};
    CyclicFeed feed(spec, 2, 1, 9);
    int pushes = 0;
    auto log = run_sim(spec, store, tiny_sched(), {}, params, feed,
                       [&](const GroupReport&) { return ++pushes < 15; });
    return std::make_pair(log, store.pull().first);
  };
  auto [dlog, dparams] = run_mode(false);
  auto [clog, cparams] = run_mode(true);
  REQUIRE(dlog.size() == clog.size());
  for (std::size_t i = 0; i < dlog.size(); ++i) {
    CHECK(dlog[i].sim_time == clog[i].sim_time);
    CHECK(dlog[i].u_pull == clog[i].u_pull);
    CHECK(dlog[i].staleness == clog[i].staleness);
  }
  for (std::size_t i = 0; i < dparams.size(); ++i) CHECK(dparams[i] == cparams[i]);
}

TEST_CASE("concurrent mode with several workers keeps the store invariants") {
  auto spec = ModelSpec::gru(6, 3, 4);
  auto init = init_params(spec, 5);
  GlobalStore store(init, 3, {});
  auto sched = tiny_sched();
  sched.local_opt_window = 50;  // exercise Hogwild writes as well
  SimParams params{3, 2, CostModel{20000, 0.01, 0}, 6, true};
  CyclicFeed feed(spec, 2, 3, 7);
  std::atomic<int> pushes{0};
  auto log = run_sim(spec, store, sched, {}, params, feed,
                     [&](const GroupReport&) { return ++pushes < 40; });
  CHECK(log.size() >= 40);
  CHECK(store.u() == static_cast<long>(log.size()));
  for (const auto& rec : log) CHECK(rec.staleness >= 0);
  for (int s = 0; s < 3; ++s)
    CHECK(store.shard_state(s).t == static_cast<long long>(log.size()));
  auto snap = store.pull().first;
  CHECK(!first_nonfinite(snap).has_value());
}

TEST_CASE("staleness_stats") {
  std::vector<PushRecord> log;
  for (int i = 0; i < 5; ++i) log.push_back({i, 0, 0.0, i, i, 0, 10});
  auto st = staleness_stats(log);
  CHECK(st.mean == 0.0);
  CHECK(st.max == 0);
  CHECK(st.histogram.at(0) == 5);

  long total = 0;
  for (const auto& [k, v] : st.histogram) total += v;
  CHECK(total == static_cast<long>(log.size()));

  CHECK_THROWS_AS(staleness_stats({}), std::invalid_argument);
}

TEST_CASE("wps arithmetic and monotonicity") {
  std::vector<PushRecord> one{{0, 0, 1.0, 0, 0, 0, 3000}};
  CHECK(wps(one, 1.0) == doctest::Approx(3000.0));
  CHECK_THROWS_AS(wps(one, 0.0), std::invalid_argument);

  // doubling the push overhead strictly lowers wps at fixed workload
  auto spec = ModelSpec::gru(6, 3, 4);
  auto measure = [&](double overhead, int tau) {
    auto init = init_params(spec, 6);
    GlobalStore store(init, 1, {});
    SimParams params{1, tau, CostModel{10000, overhead, 0}, 0, false};
    CyclicFeed feed(spec, tau, 1, 25);
    int pushes = 0;
    auto log = run_sim(spec, store, tiny_sched(), {}, params, feed,
                       [&](const GroupReport&) { return ++pushes < 12; });
    return wps(log, log.back().sim_time);
  };
  CHECK(measure(0.10, 1) < measure(0.05, 1));
  CHECK(measure(0.05, 2) > measure(0.05, 1));
}

TEST_CASE("push log CSV has the documented columns") {
  std::vector<PushRecord> log{{0, 1, 0.5, 0, 0, 0, 42}};
  std::ostringstream os;
  write_push_log_csv(os, log);
  const std::string out = os.str();
  CHECK(out.find("push_index,worker,sim_time,u_pull,u_apply,staleness,tokens") == 0);
  CHECK(out.find("0,1,0.5,0,0,0,42") != std::string::npos);
}
