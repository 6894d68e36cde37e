// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "asgd/errors.hpp"
#include "asgd/real.hpp"

namespace asgd {

/// Immutable map from segment names to contiguous ranges of one flat
/// parameter vector. Segments are laid out in lexicographic name order so
/// offsets (and therefore shard boundaries) are identical across runs.
class ParamLayout {
 public:
  struct Segment {
    std::string name;
    std::size_t offset;
    std::size_t length;
  };

  static std::shared_ptr<const ParamLayout> make(
      std::vector<std::pair<std::string, std::size_t>> segs) {
    std::sort(segs.begin(), segs.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    auto layout = std::make_shared<ParamLayout>();
    std::size_t offset = 0;
    for (auto& [name, len] : segs) {
      if (!layout->segments_.empty() && layout->segments_.back().name == name)
        throw std::invalid_argument("duplicate segment name: " + name);
      layout->segments_.push_back({std::move(name), offset, len});
      offset += len;
    }
    layout->total_len_ = offset;
    return layout;
  }

  std::size_t total_len() const { return total_len_; }
  const std::vector<Segment>& segments() const { return segments_; }

  const Segment* find(std::string_view name) const {
    auto it = std::lower_bound(
        segments_.begin(), segments_.end(), name,
        [](const Segment& s, std::string_view n) { return s.name < n; });
    if (it == segments_.end() || it->name != name) return nullptr;
    return &*it;
  }

  const Segment& at(std::string_view name) const {
    const Segment* s = find(name);
    if (!s) throw std::invalid_argument("no segment named '" + std::string(name) + "'");
    return *s;
  }

  /// Name of the segment containing flat index `i` ("?" if out of range).
  std::string segment_of(std::size_t i) const {
    for (const auto& s : segments_)
      if (i >= s.offset && i < s.offset + s.length) return s.name;
    return "?";
  }

  friend bool operator==(const ParamLayout& a, const ParamLayout& b) {
    if (a.total_len_ != b.total_len_ || a.segments_.size() != b.segments_.size())
      return false;
    for (std::size_t i = 0; i < a.segments_.size(); ++i) {
      const auto& x = a.segments_[i];
      const auto& y = b.segments_[i];
      if (x.name != y.name || x.offset != y.offset || x.length != y.length)
        return false;
    }
    return true;
  }

 private:
  std::vector<Segment> segments_;
  std::size_t total_len_ = 0;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

/// One flat dense vector tied to a layout. Serves as both parameters and
/// gradients. Pure value semantics; copies are deep.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(LayoutPtr layout)
      : layout_(std::move(layout)), values_(layout_->total_len(), real(0)) {}
  ParamVector(LayoutPtr layout, std::vector<real> values)
      : layout_(std::move(layout)), values_(std::move(values)) {
    if (values_.size() != layout_->total_len())
      throw std::invalid_argument("value count does not match layout");
  }

  const LayoutPtr& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }
  real operator[](std::size_t i) const { return values_[i]; }
  real& operator[](std::size_t i) { return values_[i]; }
  const std::vector<real>& values() const { return values_; }
  std::vector<real>& values() { return values_; }
  const real* data() const { return values_.data(); }
  real* data() { return values_.data(); }

  std::span<real> seg(std::string_view name) {
    const auto& s = layout_->at(name);
    return {values_.data() + s.offset, s.length};
  }
  std::span<const real> seg(std::string_view name) const {
    const auto& s = layout_->at(name);
    return {values_.data() + s.offset, s.length};
  }

  bool same_layout(const ParamVector& other) const {
    if (layout_ == other.layout_) return true;
    return layout_ && other.layout_ && *layout_ == *other.layout_;
  }

 private:
  LayoutPtr layout_;
  std::vector<real> values_;
};

inline ParamVector zeros_like(LayoutPtr layout) {
  return ParamVector(std::move(layout));
}
inline ParamVector zeros_like(const ParamVector& v) {
  return ParamVector(v.layout());
}

inline void require_same_layout(const ParamVector& a, const ParamVector& b) {
  if (!a.same_layout(b)) throw std::invalid_argument("layout mismatch");
}

/// y[i] += alpha * x[i], in place.
inline void axpy_inplace(real alpha, const ParamVector& x, ParamVector& y) {
  require_same_layout(x, y);
  const real* xs = x.data();
  real* ys = y.data();
  for (std::size_t i = 0, n = y.size(); i < n; ++i) ys[i] += alpha * xs[i];
}

/// Returns y + alpha * x, inputs untouched.
inline ParamVector axpy(real alpha, const ParamVector& x, const ParamVector& y) {
  ParamVector out = y;
  axpy_inplace(alpha, x, out);
  return out;
}

inline void check_range(const ParamVector& v, std::size_t start, std::size_t end) {
  if (start > end || end > v.size())
    throw std::out_of_range("range [" + std::to_string(start) + ", " +
                            std::to_string(end) + ") out of bounds for length " +
                            std::to_string(v.size()));
}

inline std::vector<real> range_read(const ParamVector& v, std::size_t start,
                                    std::size_t end) {
  check_range(v, start, end);
  return std::vector<real>(v.data() + start, v.data() + end);
}

inline void range_write(ParamVector& v, std::size_t start, std::size_t end,
                        std::span<const real> src) {
  check_range(v, start, end);
  if (src.size() != end - start)
    throw std::invalid_argument("source slice length does not match range");
  std::copy(src.begin(), src.end(), v.data() + start);
}

/// Index of the first non-finite entry, if any.
inline std::optional<std::size_t> first_nonfinite(const ParamVector& v) {
  for (std::size_t i = 0, n = v.size(); i < n; ++i)
    if (!std::isfinite(v[i])) return i;
  return std::nullopt;
}

/// Throws NumericalFault naming the offending segment if `v` has NaN/Inf.
inline void require_finite(const ParamVector& v, std::string_view what) {
  if (auto i = first_nonfinite(v)) {
    throw NumericalFault("non-finite value in " + std::string(what) +
                         ", segment '" + v.layout()->segment_of(*i) +
                         "' (flat index " + std::to_string(*i) + ")");
  }
}

}  // namespace asgd
