// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "asgd/errors.hpp"
#include "asgd/param_vector.hpp"
#include "asgd/real.hpp"

namespace asgd {

struct HyperParams {
  real lr;
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);

  void validate() const {
    if (!(lr > 0)) throw std::invalid_argument("lr must be > 0");
    if (!(beta1 >= 0 && beta1 < 1)) throw std::invalid_argument("beta1 must be in [0, 1)");
    if (!(beta2 >= 0 && beta2 < 1)) throw std::invalid_argument("beta2 must be in [0, 1)");
    if (!(eps > 0)) throw std::invalid_argument("eps must be > 0");
  }
};

/// First/second moment vectors plus step counter for one Adam instance.
/// A state covers either a full parameter vector or one shard range; its
/// vectors are sized to exactly the range it updates.
struct AdamState {
  std::vector<real> m;
  std::vector<real> v;
  long long t = 0;

  static AdamState sized(std::size_t n) { return {std::vector<real>(n, 0), std::vector<real>(n, 0), 0}; }
  std::size_t size() const { return m.size(); }
};

namespace detail {

// The update rule is strictly elementwise; this template is the single
// implementation shared by plain vectors and the atomic parameter store.
// Access requires: real load(i), void store(i, x) over flat indices.
template <typename Access>
void adam_apply_ranged(Access&& params, const real* grad, AdamState& state,
                       const HyperParams& hp, std::size_t start, std::size_t end) {
  if (state.size() != end - start)
    throw std::invalid_argument("Adam state size does not match range");
  state.t += 1;  // t incremented before bias correction: first step uses t = 1
  const real c1 = real(1) - static_cast<real>(std::pow(hp.beta1, static_cast<real>(state.t)));
  const real c2 = real(1) - static_cast<real>(std::pow(hp.beta2, static_cast<real>(state.t)));
  for (std::size_t i = start; i < end; ++i) {
    const std::size_t k = i - start;
    const real g = grad[i];
    const real m = hp.beta1 * state.m[k] + (real(1) - hp.beta1) * g;
    const real v = hp.beta2 * state.v[k] + (real(1) - hp.beta2) * g * g;
    state.m[k] = m;
    state.v[k] = v;
    const real mhat = m / c1;
    const real vhat = v / c2;
    const real x = params.load(i) - hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    if (!std::isfinite(x))
      throw NumericalFault("non-finite Adam update at flat index " + std::to_string(i));
    params.store(i, x);
  }
}

struct PlainAccess {
  real* p;
  real load(std::size_t i) const { return p[i]; }
  void store(std::size_t i, real x) const { p[i] = x; }
};

}  // namespace detail

/// theta' = theta - lr * g.
inline void sgd_step(ParamVector& params, const ParamVector& grad, real lr) {
  axpy_inplace(-lr, grad, params);
}

/// One Adam step restricted to [start, end); out-of-range entries untouched.
/// `state` must be sized to the range. The step counter advances even for an
/// empty range, keeping shard states in lock-step.
inline void adam_step_ranged(ParamVector& params, const ParamVector& grad,
                             AdamState& state, const HyperParams& hp,
                             std::size_t start, std::size_t end) {
  require_same_layout(params, grad);
  check_range(params, start, end);
  detail::adam_apply_ranged(detail::PlainAccess{params.data()}, grad.data(),
                            state, hp, start, end);
}

/// One Adam step over the whole vector.
inline void adam_step(ParamVector& params, const ParamVector& grad,
                      AdamState& state, const HyperParams& hp) {
  adam_step_ranged(params, grad, state, hp, 0, params.size());
}

}  // namespace asgd
