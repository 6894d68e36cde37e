// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace asgd {

/// Raised when a computation produces a NaN/Inf. The message names the
/// parameter segment holding the first offending coordinate when known.
class NumericalFault : public std::runtime_error {
 public:
  explicit NumericalFault(const std::string& what) : std::runtime_error(what) {}
};

/// Raised by config parsing/validation. Collects every problem found so a
/// bad config is reported in one pass, each message prefixed by its key path.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& ps) {
    std::string out = "invalid config:";
    for (const auto& p : ps) {
      out += "\n  - ";
      out += p;
    }
    return out;
  }
  std::vector<std::string> problems_;
};

}  // namespace asgd
