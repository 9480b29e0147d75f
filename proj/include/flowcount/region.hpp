#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "flowcount/error.hpp"

namespace flowcount {

/// Axis-aligned pixel box with closed-open extent [x_min, x_max) x [y_min, y_max).
struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const { return x_min <= x_max && y_min <= y_max; }
  bool degenerate() const { return !(width() > 0.0 && height() > 0.0); }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Area of the intersection of two boxes; zero when they only touch.
inline double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

inline bool overlaps(const Box& a, const Box& b) { return intersection_area(a, b) > 0.0; }

/// One horizontal run of mask pixels: columns [col_begin, col_end) of `row`.
struct MaskRun {
  std::int64_t row = 0;
  std::int64_t col_begin = 0;
  std::int64_t col_end = 0;

  friend auto operator<=>(const MaskRun&, const MaskRun&) = default;
};

/// Run-length encoded pixel set. Runs are kept sorted and merged.
class Mask {
 public:
  Mask() = default;

  explicit Mask(std::vector<MaskRun> runs) : runs_(std::move(runs)) {
    for (const auto& r : runs_) {
      if (r.col_end < r.col_begin) throw InputError("mask run with col_end < col_begin");
    }
    std::erase_if(runs_, [](const MaskRun& r) { return r.col_end == r.col_begin; });
    std::sort(runs_.begin(), runs_.end());
    std::vector<MaskRun> merged;
    merged.reserve(runs_.size());
    for (const auto& r : runs_) {
      if (!merged.empty() && merged.back().row == r.row && r.col_begin <= merged.back().col_end) {
        merged.back().col_end = std::max(merged.back().col_end, r.col_end);
      } else {
        merged.push_back(r);
      }
    }
    runs_ = std::move(merged);
  }

  const std::vector<MaskRun>& runs() const { return runs_; }
  bool empty() const { return runs_.empty(); }

  std::int64_t pixel_count() const {
    std::int64_t n = 0;
    for (const auto& r : runs_) n += r.col_end - r.col_begin;
    return n;
  }

  /// Tight pixel bounding box; requires a nonempty mask.
  Box bounds() const {
    Box b{static_cast<double>(runs_.front().col_begin), static_cast<double>(runs_.front().row),
          static_cast<double>(runs_.front().col_end), static_cast<double>(runs_.front().row + 1)};
    for (const auto& r : runs_) {
      b.x_min = std::min(b.x_min, static_cast<double>(r.col_begin));
      b.x_max = std::max(b.x_max, static_cast<double>(r.col_end));
      b.y_min = std::min(b.y_min, static_cast<double>(r.row));
      b.y_max = std::max(b.y_max, static_cast<double>(r.row + 1));
    }
    return b;
  }

  /// True iff the masks share at least one pixel.
  bool intersects(const Mask& other) const {
    auto a = runs_.begin();
    auto b = other.runs_.begin();
    while (a != runs_.end() && b != other.runs_.end()) {
      if (a->row != b->row) {
        (a->row < b->row) ? ++a : ++b;
        continue;
      }
      if (std::max(a->col_begin, b->col_begin) < std::min(a->col_end, b->col_end)) return true;
      (a->col_end < b->col_end) ? ++a : ++b;
    }
    return false;
  }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::vector<MaskRun> runs_;
};

enum class RegionKind { box, mask };

/// Image region of a segmented group. A mask region still carries its box.
struct Region {
  Box box;
  std::optional<Mask> mask;

  RegionKind kind() const { return mask ? RegionKind::mask : RegionKind::box; }

  static Region from_box(Box b) { return Region{b, std::nullopt}; }

  /// Mask region whose box defaults to the mask's pixel bounds.
  static Region from_mask(Mask m, std::optional<Box> b = std::nullopt) {
    if (m.empty()) throw InputError("empty mask region");
    Box box = b ? *b : m.bounds();
    return Region{box, std::move(m)};
  }

  /// Throws InputError when the box is inverted or the mask leaves the box.
  void validate() const {
    if (!box.valid()) throw InputError("region box has min > max");
    if (!mask) return;
    for (const auto& r : mask->runs()) {
      if (static_cast<double>(r.col_begin) < box.x_min || static_cast<double>(r.col_end) > box.x_max ||
          static_cast<double>(r.row) < box.y_min || static_cast<double>(r.row + 1) > box.y_max) {
        throw InputError("region mask extends outside its box");
      }
    }
  }

  friend bool operator==(const Region&, const Region&) = default;
};

/// Pixel-level test when both regions carry masks, positive-area box test otherwise.
inline bool overlaps(const Region& a, const Region& b) {
  if (a.mask && b.mask) {
    if (!overlaps(a.box, b.box)) return false;
    return a.mask->intersects(*b.mask);
  }
  return overlaps(a.box, b.box);
}

}  // namespace flowcount
