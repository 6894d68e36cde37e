// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace asgd {

// Verification precision is float64. Define ASGD_USE_FLOAT32 to trade
// precision for speed; the tight-tolerance test suites assume float64.
#ifdef ASGD_USE_FLOAT32
using real = float;
#else
using real = double;
#endif

}  // namespace asgd
