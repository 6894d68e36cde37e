// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "asgd/models.hpp"
#include "support/oracles.hpp"

using namespace asgd;
using test_oracle::rel_err;

TEST_CASE("linear regression worked example") {
  auto spec = ModelSpec::linear(1);
  ParamVector w(spec.layout(), {1.0});
  Batch b;
  b.xs = {{2.0}};
  b.ys = {5.0};
  auto fl = forward_loss(spec, w, b);
  CHECK(fl.loss == doctest::Approx(9.0).epsilon(1e-15));  // (2*1 - 5)^2
  CHECK(fl.tokens == 1);
  auto bw = backward(spec, w, b);
  CHECK(bw.grad[0] == doctest::Approx(-12.0).epsilon(1e-15));  // 2(wx-y)x
  CHECK(bw.loss == fl.loss);
}

TEST_CASE("init_params is deterministic and respects the layout") {
  auto spec = ModelSpec::linear(3);
  auto a = init_params(spec, 7);
  auto b = init_params(spec, 7);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  auto c = init_params(spec, 8);
  bool any_differ = false;
  for (std::size_t i = 0; i < a.size(); ++i) any_differ |= (a[i] != c[i]);
  CHECK(any_differ);

  auto gspec = ModelSpec::gru(8, 4, 4);
  auto g = init_params(gspec, 1);
  CHECK(g.size() == gspec.layout()->total_len());
}

TEST_CASE("mlp init stays within the documented uniform bounds") {
  auto spec = ModelSpec::mlp(2, 4, 2);
  auto p = init_params(spec, 0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p[i] >= -0.5);
    CHECK(p[i] <= 0.5);
  }
}

TEST_CASE("zero-parameter gru_lm gives uniform-softmax cross-entropy") {
  auto spec = ModelSpec::gru(8, 4, 4);
  ParamVector p(spec.layout());  // zeros -> logits all zero -> uniform
  Batch b;
  b.seqs = {{0, 3, 7, 2}, {5, 5}};
  auto fl = forward_loss(spec, p, b);
  CHECK(fl.tokens == 6);
  CHECK(rel_err(fl.loss / fl.tokens, std::log(8.0)) < 1e-12);
}

TEST_CASE("forward_loss is deterministic") {
  auto spec = ModelSpec::gru(8, 4, 4);
  auto p = init_params(spec, 3);
  auto b = random_batch(spec, 4, 3);
  const double l1 = forward_loss(spec, p, b).loss;
  const double l2 = forward_loss(spec, p, b).loss;
  CHECK(l1 == l2);
}

TEST_CASE("gradient check: linear loss is quadratic so central diff is exact") {
  auto spec = ModelSpec::linear(3);
  auto p = init_params(spec, 1);
  auto b = random_batch(spec, 2, 4);
  CHECK(grad_check(spec, p, b, 1e-4) <= 1e-8);
}

TEST_CASE("gradient check: mlp") {
  auto spec = ModelSpec::mlp(2, 4, 2);
  auto p = init_params(spec, 0);
  auto b = random_batch(spec, 0, 5);
  CHECK(grad_check(spec, p, b, 1e-4) <= 1e-5);
}

TEST_CASE("gradient check: gru_lm with one length-5 sequence") {
  auto spec = ModelSpec::gru(8, 4, 4);
  auto p = init_params(spec, 1);
  Batch b;
  b.seqs = {{1, 4, 0, 6, 3}};
  CHECK(grad_check(spec, p, b, 1e-4) <= 1e-4);
}

TEST_CASE("gradient check holds across random instances of every kind") {
  struct Case {
    ModelSpec spec;
    double tol;
  };
  const Case cases[] = {
      {ModelSpec::linear(4), 1e-8},
      {ModelSpec::mlp(3, 5, 3), 1e-5},
      {ModelSpec::gru(6, 3, 4), 1e-4},
  };
  for (const auto& c : cases) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto p = init_params(c.spec, seed);
      auto b = random_batch(c.spec, seed + 100, 3);
      CHECK(grad_check(c.spec, p, b, 1e-4) <= c.tol);
    }
  }
}

TEST_CASE("gradient of a duplicated single example is exactly doubled") {
  auto spec = ModelSpec::gru(8, 4, 4);
  auto p = init_params(spec, 9);
  Batch one;
  one.seqs = {{2, 5, 1}};
  Batch two;
  two.seqs = {{2, 5, 1}, {2, 5, 1}};
  auto g1 = backward(spec, p, one).grad;
  auto g2 = backward(spec, p, two).grad;
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == 2 * g1[i]);
}

TEST_CASE("gradient is additive over batch concatenation") {
  for (auto spec : {ModelSpec::mlp(3, 4, 3), ModelSpec::gru(8, 4, 4)}) {
    auto p = init_params(spec, 2);
    auto a = random_batch(spec, 10, 3);
    auto b = random_batch(spec, 11, 2);
    Batch ab = a;
    ab.xs.insert(ab.xs.end(), b.xs.begin(), b.xs.end());
    ab.ys.insert(ab.ys.end(), b.ys.begin(), b.ys.end());
    ab.labels.insert(ab.labels.end(), b.labels.begin(), b.labels.end());
    ab.seqs.insert(ab.seqs.end(), b.seqs.begin(), b.seqs.end());
    auto gab = backward(spec, p, ab).grad;
    auto gsum = axpy(1.0, backward(spec, p, a).grad, backward(spec, p, b).grad);
    for (std::size_t i = 0; i < gab.size(); ++i)
      REQUIRE(rel_err(gab[i], gsum[i]) <= 1e-12);
  }
}

TEST_CASE("token_count of a sequence batch is the sum of sentence lengths") {
  Batch b;
  b.seqs = {{1, 2, 3}, {4}, {5, 6}};
  CHECK(b.token_count() == 6);
}

TEST_CASE("invalid inputs are rejected") {
  auto spec = ModelSpec::gru(8, 4, 4);
  auto p = init_params(spec, 0);
  Batch empty;
  CHECK_THROWS_AS(forward_loss(spec, p, empty), std::invalid_argument);
  Batch bad;
  bad.seqs = {{0, 9}};  // token out of vocab
  CHECK_THROWS_AS(forward_loss(spec, p, bad), std::invalid_argument);
  CHECK_THROWS_AS(ModelSpec::gru(1, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(ModelSpec::mlp(0, 4, 2), std::invalid_argument);

  auto wrong = init_params(ModelSpec::gru(8, 4, 5), 0);
  Batch ok;
  ok.seqs = {{0, 1}};
  CHECK_THROWS_AS(forward_loss(spec, wrong, ok), std::invalid_argument);
}

TEST_CASE("non-finite parameters surface as a named fault") {
  auto spec = ModelSpec::linear(2);
  ParamVector p(spec.layout(), {1.0, std::numeric_limits<real>::infinity()});
  Batch b;
  b.xs = {{1.0, 1.0}};
  b.ys = {0.0};
  CHECK_THROWS_AS(forward_loss(spec, p, b), NumericalFault);
}
