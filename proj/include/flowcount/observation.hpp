#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowcount/error.hpp"
#include "flowcount/region.hpp"

namespace flowcount {

using FrameId = std::int64_t;
using GroupId = std::int64_t;

/// Identifies one group vertex: group `group_id` in frame `frame`.
struct GroupKey {
  FrameId frame = 0;
  GroupId group_id = 0;

  friend auto operator<=>(const GroupKey&, const GroupKey&) = default;
};

inline std::string to_string(const GroupKey& k) {
  return "P(" + std::to_string(k.frame) + "," + std::to_string(k.group_id) + ")";
}

/// Inclusive frame interval; empty when last < first.
struct FrameRange {
  FrameId first = 0;
  FrameId last = -1;

  bool empty() const { return last < first; }
  std::size_t size() const { return empty() ? 0 : static_cast<std::size_t>(last - first + 1); }
  bool contains(FrameId f) const { return f >= first && f <= last; }

  friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

/// One segmented group in one frame together with its regressor prediction.
struct GroupObservation {
  GroupKey key;
  std::optional<Region> region;
  double predicted_count = 0.0;
  double weight = 1.0;
  // Only consulted under OverlapRule::explicit_adjacency.
  std::vector<GroupId> prev_adjacency;
  bool touches_source = false;
  bool touches_sink = false;

  friend bool operator==(const GroupObservation&, const GroupObservation&) = default;
};

enum class OverlapRule { region_intersection, explicit_adjacency };

inline std::string to_string(OverlapRule r) {
  return r == OverlapRule::region_intersection ? "region-intersection" : "explicit-adjacency";
}

inline OverlapRule parse_overlap_rule(const std::string& s) {
  if (s == "region-intersection") return OverlapRule::region_intersection;
  if (s == "explicit-adjacency") return OverlapRule::explicit_adjacency;
  throw InputError("unknown overlap rule '" + s + "'");
}

/// Entry zone S, exit zone T and the rule deciding group-to-group overlap.
struct SceneConfig {
  Box entry;
  Box exit;
  OverlapRule overlap_rule = OverlapRule::region_intersection;

  void validate() const {
    if (!entry.valid() || entry.degenerate()) throw InputError("scene entry region S is degenerate");
    if (!exit.valid() || exit.degenerate()) throw InputError("scene exit region T is degenerate");
  }
};

/// Validated, immutable set of observations sorted by (frame, group_id) with a frame index.
class ObservationStore {
 public:
  ObservationStore() = default;

  explicit ObservationStore(std::vector<GroupObservation> observations) : obs_(std::move(observations)) {
    std::sort(obs_.begin(), obs_.end(),
              [](const GroupObservation& a, const GroupObservation& b) { return a.key < b.key; });
    for (std::size_t i = 0; i < obs_.size(); ++i) {
      const auto& o = obs_[i];
      if (o.key.frame < 0) throw InputError("negative frame index for " + to_string(o.key));
      if (i > 0 && obs_[i - 1].key == o.key) throw InputError("duplicate observation " + to_string(o.key));
      if (!(o.predicted_count >= 0.0)) throw InputError("negative predicted_count for " + to_string(o.key));
      if (!(o.weight > 0.0)) throw InputError("non-positive weight for " + to_string(o.key));
      if (o.region) o.region->validate();
    }
    for (std::size_t i = 0; i < obs_.size();) {
      std::size_t j = i;
      while (j < obs_.size() && obs_[j].key.frame == obs_[i].key.frame) ++j;
      frames_.emplace(obs_[i].key.frame, std::make_pair(i, j));
      i = j;
    }
  }

  explicit ObservationStore(std::span<const GroupObservation> observations)
      : ObservationStore(std::vector<GroupObservation>(observations.begin(), observations.end())) {}

  const std::vector<GroupObservation>& all() const { return obs_; }
  bool empty() const { return obs_.empty(); }

  /// Observed frames, first to last; empty range when there are no observations.
  FrameRange frames() const {
    if (obs_.empty()) return {};
    return {obs_.front().key.frame, obs_.back().key.frame};
  }

  std::span<const GroupObservation> in_frame(FrameId f) const {
    auto it = frames_.find(f);
    if (it == frames_.end()) return {};
    return std::span<const GroupObservation>(obs_).subspan(it->second.first, it->second.second - it->second.first);
  }

 private:
  std::vector<GroupObservation> obs_;
  std::map<FrameId, std::pair<std::size_t, std::size_t>> frames_;
};

}  // namespace flowcount
