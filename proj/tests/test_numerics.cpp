// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "asgd/param_vector.hpp"
#include "asgd/rng.hpp"

using namespace asgd;

static LayoutPtr layout_ab() { return ParamLayout::make({{"a", 2}, {"b", 3}}); }

TEST_CASE("layout orders segments by name with contiguous offsets") {
  auto l = ParamLayout::make({{"w2", 4}, {"b", 1}, {"w1", 2}});
  REQUIRE(l->segments().size() == 3);
  CHECK(l->segments()[0].name == "b");
  CHECK(l->segments()[0].offset == 0);
  CHECK(l->segments()[1].name == "w1");
  CHECK(l->segments()[1].offset == 1);
  CHECK(l->segments()[2].name == "w2");
  CHECK(l->segments()[2].offset == 3);
  CHECK(l->total_len() == 7);
  CHECK(l->segment_of(4) == "w2");
  CHECK(l->at("w1").length == 2);
  CHECK(l->find("nope") == nullptr);
  CHECK_THROWS_AS(ParamLayout::make({{"x", 1}, {"x", 2}}), std::invalid_argument);
}

TEST_CASE("zeros_like") {
  auto v = zeros_like(layout_ab());
  CHECK(v.size() == 5);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == 0.0);

  auto empty = zeros_like(ParamLayout::make({}));
  CHECK(empty.size() == 0);

  auto one = zeros_like(ParamLayout::make({{"w", 1}}));
  REQUIRE(one.size() == 1);
  CHECK(one[0] == 0.0);
}

TEST_CASE("axpy examples") {
  auto l = ParamLayout::make({{"w", 2}});
  ParamVector x(l, {1, 2});
  ParamVector y(l, {3, 4});
  auto r = axpy(1.0, x, y);
  CHECK(r[0] == 4.0);
  CHECK(r[1] == 6.0);

  auto id = axpy(0.0, x, y);
  CHECK(id[0] == 3.0);
  CHECK(id[1] == 4.0);

  ParamVector x2(l, {2, 2});
  ParamVector y2(l, {1, 1});
  auto z = axpy(-0.5, x2, y2);
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.0);

  ParamVector other(ParamLayout::make({{"w", 3}}));
  CHECK_THROWS_AS(axpy(1.0, x, other), std::invalid_argument);
}

TEST_CASE("axpy composition is exact on integer-valued vectors") {
  auto l = ParamLayout::make({{"p", 16}});
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    ParamVector x(l), y(l);
    for (std::size_t i = 0; i < 16; ++i) {
      x[i] = static_cast<double>(static_cast<int>(rng.below(41)) - 20);
      y[i] = static_cast<double>(static_cast<int>(rng.below(41)) - 20);
    }
    const double a = static_cast<double>(static_cast<int>(rng.below(9)) - 4);
    const double b = static_cast<double>(static_cast<int>(rng.below(9)) - 4);
    auto nested = axpy(a, x, axpy(b, x, y));
    auto flat = axpy(a + b, x, y);
    for (std::size_t i = 0; i < 16; ++i) CHECK(nested[i] == flat[i]);
  }
}

TEST_CASE("zeros is the additive identity under axpy") {
  auto l = layout_ab();
  ParamVector y(l, {1.5, -2, 0.25, 3, -0.125});
  auto r = axpy(1.0, zeros_like(l), y);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(r[i] == y[i]);
}

TEST_CASE("range read and write") {
  auto l = ParamLayout::make({{"w", 3}});
  ParamVector v(l, {10, 20, 30});
  auto r = range_read(v, 1, 3);
  REQUIRE(r.size() == 2);
  CHECK(r[0] == 20.0);
  CHECK(r[1] == 30.0);
  CHECK(range_read(v, 2, 2).empty());

  ParamVector w(l, {0, 0, 0});
  std::vector<real> src{5, 6};
  range_write(w, 0, 2, src);
  CHECK(w[0] == 5.0);
  CHECK(w[1] == 6.0);
  CHECK(w[2] == 0.0);

  CHECK_THROWS_AS(range_read(v, 2, 4), std::out_of_range);
  CHECK_THROWS_AS(range_write(w, 0, 3, src), std::invalid_argument);
}

TEST_CASE("range write then read round-trips") {
  auto l = ParamLayout::make({{"w", 10}});
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    ParamVector v(l);
    const std::size_t start = rng.below(10);
    const std::size_t end = start + rng.below(11 - start);
    std::vector<real> src(end - start);
    for (auto& s : src) s = rng.uniform(-5, 5);
    range_write(v, start, end, src);
    CHECK(range_read(v, start, end) == src);
  }
}

TEST_CASE("non-finite entries are detected and named") {
  auto v = zeros_like(layout_ab());
  CHECK(!first_nonfinite(v).has_value());
  v[3] = std::numeric_limits<real>::quiet_NaN();
  auto idx = first_nonfinite(v);
  REQUIRE(idx.has_value());
  CHECK(*idx == 3);
  CHECK_THROWS_WITH_AS(require_finite(v, "params"),
                       doctest::Contains("segment 'b'"), NumericalFault);
}
