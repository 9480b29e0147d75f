#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "flowcount/error.hpp"
#include "flowcount/observation.hpp"
#include "flowcount/region.hpp"
#include "flowcount/union_find.hpp"

namespace flowcount {

enum class NodeKind : std::uint8_t { source = 0, group = 1, sink = 2 };

/// Vertex of a flow network: the source S, the sink T, or a group by index.
/// Ordering is S < groups (by index) < T.
struct Node {
  NodeKind kind = NodeKind::source;
  std::size_t index = 0;

  static constexpr Node source() { return {NodeKind::source, 0}; }
  static constexpr Node sink() { return {NodeKind::sink, 0}; }
  static constexpr Node group(std::size_t i) { return {NodeKind::group, i}; }

  bool is_source() const { return kind == NodeKind::source; }
  bool is_sink() const { return kind == NodeKind::sink; }
  bool is_group() const { return kind == NodeKind::group; }

  friend auto operator<=>(const Node&, const Node&) = default;
};

/// Construction rule that produced an arc. Arcs carry a bitmask of every rule that applies.
enum class ArcRule : std::uint8_t {
  overlap = 1,      // consecutive-frame groups overlap
  scene_zone = 2,   // group overlaps the entry (S) or exit (T) zone
  window_edge = 4,  // group lies in the first (S) or last (T) frame of the window
  unmatched = 8,    // no overlap with any group of the previous (S) or next (T) frame
};

using RuleSet = std::uint8_t;

constexpr RuleSet rule_bit(ArcRule r) { return static_cast<RuleSet>(r); }

inline std::string rule_names(RuleSet rules) {
  static constexpr std::pair<ArcRule, const char*> names[] = {{ArcRule::overlap, "overlap"},
                                                              {ArcRule::scene_zone, "scene"},
                                                              {ArcRule::window_edge, "edge"},
                                                              {ArcRule::unmatched, "unmatched"}};
  std::string out;
  for (const auto& [rule, name] : names) {
    if (rules & rule_bit(rule)) {
      if (!out.empty()) out += '+';
      out += name;
    }
  }
  return out;
}

struct Arc {
  Node tail;
  Node head;
  RuleSet rules = 0;

  bool has(ArcRule r) const { return (rules & rule_bit(r)) != 0; }
};

/// Layered directed network D(V, A) over the groups of a frame window plus S and T.
///
/// Groups are stored sorted by (frame, group_id); arcs are sorted by (tail, head)
/// and unique, with rule tags of duplicate arcs merged.
class FlowNetwork {
 public:
  FlowNetwork() { index_arcs(); }

  FlowNetwork(std::vector<GroupObservation> groups, std::vector<Arc> arcs, FrameRange layers)
      : groups_(std::move(groups)), layers_(layers) {
    for (std::size_t i = 1; i < groups_.size(); ++i) {
      if (!(groups_[i - 1].key < groups_[i].key)) throw InputError("network groups must be strictly sorted");
    }
    for (const auto& a : arcs) {
      for (Node n : {a.tail, a.head}) {
        if (n.is_group() && n.index >= groups_.size()) throw InputError("arc endpoint out of range");
      }
      if (a.tail.is_sink() || a.head.is_source()) throw InputError("arc leaves T or enters S");
    }
    std::sort(arcs.begin(), arcs.end(), [](const Arc& a, const Arc& b) {
      return std::tie(a.tail, a.head) < std::tie(b.tail, b.head);
    });
    for (const auto& a : arcs) {
      if (!arcs_.empty() && arcs_.back().tail == a.tail && arcs_.back().head == a.head) {
        arcs_.back().rules |= a.rules;
      } else {
        arcs_.push_back(a);
      }
    }
    index_arcs();
  }

  const std::vector<GroupObservation>& groups() const { return groups_; }
  const GroupObservation& group(std::size_t i) const { return groups_[i]; }
  const std::vector<Arc>& arcs() const { return arcs_; }
  const Arc& arc(std::size_t i) const { return arcs_[i]; }
  FrameRange layers() const { return layers_; }

  std::size_t group_count() const { return groups_.size(); }
  /// |V|, counting S and T.
  std::size_t vertex_count() const { return groups_.size() + 2; }
  std::size_t arc_count() const { return arcs_.size(); }

  std::span<const std::size_t> in_arcs(Node n) const { return in_[slot(n)]; }
  std::span<const std::size_t> out_arcs(Node n) const { return out_[slot(n)]; }

  std::optional<std::size_t> find(const GroupKey& key) const {
    auto it = std::lower_bound(groups_.begin(), groups_.end(), key,
                               [](const GroupObservation& g, const GroupKey& k) { return g.key < k; });
    if (it == groups_.end() || it->key != key) return std::nullopt;
    return static_cast<std::size_t>(it - groups_.begin());
  }

  std::optional<std::size_t> find_arc(Node tail, Node head) const {
    auto it = std::lower_bound(arcs_.begin(), arcs_.end(), std::tie(tail, head), [](const Arc& a, const auto& key) {
      return std::tie(a.tail, a.head) < key;
    });
    if (it == arcs_.end() || it->tail != tail || it->head != head) return std::nullopt;
    return static_cast<std::size_t>(it - arcs_.begin());
  }

  std::string label(Node n) const {
    if (n.is_source()) return "S";
    if (n.is_sink()) return "T";
    return to_string(groups_[n.index].key);
  }

 private:
  std::size_t slot(Node n) const {
    switch (n.kind) {
      case NodeKind::source: return groups_.size();
      case NodeKind::sink: return groups_.size() + 1;
      case NodeKind::group: break;
    }
    return n.index;
  }

  void index_arcs() {
    in_.assign(groups_.size() + 2, {});
    out_.assign(groups_.size() + 2, {});
    for (std::size_t i = 0; i < arcs_.size(); ++i) {
      out_[slot(arcs_[i].tail)].push_back(i);
      in_[slot(arcs_[i].head)].push_back(i);
    }
  }

  std::vector<GroupObservation> groups_;
  std::vector<Arc> arcs_;
  FrameRange layers_;
  std::vector<std::vector<std::size_t>> in_;
  std::vector<std::vector<std::size_t>> out_;
};

/// A weakly connected component of the group vertices with S and T re-attached.
struct SubNetwork {
  FlowNetwork network;
  /// Index in the parent network of each local group vertex.
  std::vector<std::size_t> parent_group;
};

namespace detail {

inline const Region& region_of(const GroupObservation& g) {
  if (!g.region) throw InputError("group " + to_string(g.key) + " has no region under region-intersection");
  return *g.region;
}

/// Rule (1) predicate between a group of frame t and a group of frame t+1.
inline bool consecutive_overlap(const GroupObservation& prev, const GroupObservation& next, OverlapRule rule) {
  if (rule == OverlapRule::explicit_adjacency) {
    return std::find(next.prev_adjacency.begin(), next.prev_adjacency.end(), prev.key.group_id) !=
           next.prev_adjacency.end();
  }
  return overlaps(region_of(prev), region_of(next));
}

inline bool touches_entry(const GroupObservation& g, const SceneConfig& scene) {
  if (scene.overlap_rule == OverlapRule::explicit_adjacency) return g.touches_source;
  return overlaps(region_of(g).box, scene.entry);
}

inline bool touches_exit(const GroupObservation& g, const SceneConfig& scene) {
  if (scene.overlap_rule == OverlapRule::explicit_adjacency) return g.touches_sink;
  return overlaps(region_of(g).box, scene.exit);
}

}  // namespace detail

/// Builds the layered network over the frames of `window`.
inline FlowNetwork build_network(const ObservationStore& store, const SceneConfig& scene, FrameRange window) {
  scene.validate();
  if (window.empty()) return FlowNetwork({}, {}, window);

  std::vector<GroupObservation> groups;
  std::vector<std::size_t> frame_begin;
  frame_begin.reserve(window.size() + 1);
  for (FrameId f = window.first; f <= window.last; ++f) {
    frame_begin.push_back(groups.size());
    for (const auto& g : store.in_frame(f)) groups.push_back(g);
  }
  frame_begin.push_back(groups.size());

  const bool adjacency = scene.overlap_rule == OverlapRule::explicit_adjacency;
  for (const auto& g : groups) {
    if (!adjacency) {
      detail::region_of(g);
      continue;
    }
    const auto prev = store.in_frame(g.key.frame - 1);
    for (GroupId id : g.prev_adjacency) {
      const bool known = std::any_of(prev.begin(), prev.end(), [&](const auto& p) { return p.key.group_id == id; });
      if (!known) {
        throw InputError("group " + to_string(g.key) + " lists unknown predecessor " + std::to_string(id));
      }
    }
  }

  std::vector<Arc> arcs;
  std::vector<bool> has_pred(groups.size(), false);
  std::vector<bool> has_succ(groups.size(), false);
  for (std::size_t layer = 1; layer < window.size(); ++layer) {
    for (std::size_t p = frame_begin[layer - 1]; p < frame_begin[layer]; ++p) {
      for (std::size_t q = frame_begin[layer]; q < frame_begin[layer + 1]; ++q) {
        if (detail::consecutive_overlap(groups[p], groups[q], scene.overlap_rule)) {
          arcs.push_back({Node::group(p), Node::group(q), rule_bit(ArcRule::overlap)});
          has_succ[p] = true;
          has_pred[q] = true;
        }
      }
    }
  }

  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& g = groups[i];
    RuleSet in_rules = 0;
    RuleSet out_rules = 0;
    if (detail::touches_entry(g, scene)) in_rules |= rule_bit(ArcRule::scene_zone);
    if (detail::touches_exit(g, scene)) out_rules |= rule_bit(ArcRule::scene_zone);
    if (g.key.frame == window.first) in_rules |= rule_bit(ArcRule::window_edge);
    if (g.key.frame == window.last) out_rules |= rule_bit(ArcRule::window_edge);
    if (!has_pred[i]) in_rules |= rule_bit(ArcRule::unmatched);
    if (!has_succ[i]) out_rules |= rule_bit(ArcRule::unmatched);
    if (in_rules) arcs.push_back({Node::source(), Node::group(i), in_rules});
    if (out_rules) arcs.push_back({Node::group(i), Node::sink(), out_rules});
  }

  return FlowNetwork(std::move(groups), std::move(arcs), window);
}

inline FlowNetwork build_network(std::span<const GroupObservation> observations, const SceneConfig& scene,
                                 FrameRange window) {
  return build_network(ObservationStore(observations), scene, window);
}

/// Frames of the (2*half_width+1)-layer window centred on `center`, clipped to `sequence`.
inline FrameRange window_frames(FrameRange sequence, FrameId center, std::int64_t half_width) {
  if (half_width < 1) throw InputError("window half-width must be >= 1");
  return {std::max(sequence.first, center - half_width), std::min(sequence.last, center + half_width)};
}

inline FlowNetwork window_network(const ObservationStore& store, const SceneConfig& scene, FrameId center,
                                  std::int64_t half_width, FrameRange sequence) {
  return build_network(store, scene, window_frames(sequence, center, half_width));
}

/// H(center, half_width) over the store's observed frame range.
inline FlowNetwork window_network(const ObservationStore& store, const SceneConfig& scene, FrameId center,
                                  std::int64_t half_width) {
  return window_network(store, scene, center, half_width, store.frames());
}

/// Weakly connected sub-networks, ordered by their smallest (frame, group_id).
inline std::vector<SubNetwork> decompose(const FlowNetwork& net) {
  const std::size_t g = net.group_count();
  UnionFind uf(g);
  for (const auto& a : net.arcs()) {
    if (a.tail.is_group() && a.head.is_group()) uf.unite(a.tail.index, a.head.index);
  }
  const auto label = uf.labels();
  const std::size_t count = g == 0 ? 0 : *std::max_element(label.begin(), label.end()) + 1;

  std::vector<SubNetwork> subs(count);
  std::vector<std::size_t> local(g);
  std::vector<std::vector<GroupObservation>> groups(count);
  for (std::size_t i = 0; i < g; ++i) {
    local[i] = subs[label[i]].parent_group.size();
    subs[label[i]].parent_group.push_back(i);
    groups[label[i]].push_back(net.group(i));
  }

  std::vector<std::vector<Arc>> arcs(count);
  for (const auto& a : net.arcs()) {
    const std::size_t comp = a.tail.is_group() ? label[a.tail.index] : label[a.head.index];
    Arc mapped = a;
    if (mapped.tail.is_group()) mapped.tail.index = local[a.tail.index];
    if (mapped.head.is_group()) mapped.head.index = local[a.head.index];
    arcs[comp].push_back(mapped);
  }

  for (std::size_t c = 0; c < count; ++c) {
    subs[c].network = FlowNetwork(std::move(groups[c]), std::move(arcs[c]), net.layers());
  }
  return subs;
}

/// Internal vertices in order when the network is exactly S -> v1 -> ... -> vn -> T.
inline std::optional<std::vector<std::size_t>> is_path(const FlowNetwork& net) {
  const std::size_t g = net.group_count();
  if (g == 0 || net.arc_count() != g + 1) return std::nullopt;
  if (net.out_arcs(Node::source()).size() != 1) return std::nullopt;

  std::vector<std::size_t> chain;
  chain.reserve(g);
  Node cur = net.arc(net.out_arcs(Node::source())[0]).head;
  while (cur.is_group()) {
    if (net.in_arcs(cur).size() != 1 || net.out_arcs(cur).size() != 1 || chain.size() == g) return std::nullopt;
    chain.push_back(cur.index);
    cur = net.arc(net.out_arcs(cur)[0]).head;
  }
  if (!cur.is_sink() || chain.size() != g) return std::nullopt;
  return chain;
}

inline std::optional<std::vector<std::size_t>> is_path(const SubNetwork& sub) { return is_path(sub.network); }

/// Kahn topological order of all vertices; nullopt if the network has a cycle.
inline std::optional<std::vector<Node>> topological_order(const FlowNetwork& net) {
  const std::size_t g = net.group_count();
  auto slot = [g](Node n) { return n.is_group() ? n.index : (n.is_source() ? g : g + 1); };
  std::vector<std::size_t> indeg(g + 2, 0);
  for (const auto& a : net.arcs()) ++indeg[slot(a.head)];

  std::vector<Node> order;
  std::vector<Node> ready;
  ready.push_back(Node::source());
  for (std::size_t i = 0; i < g; ++i) {
    if (indeg[i] == 0) ready.push_back(Node::group(i));
  }
  if (indeg[g + 1] == 0) ready.push_back(Node::sink());
  while (!ready.empty()) {
    const Node n = ready.back();
    ready.pop_back();
    order.push_back(n);
    for (std::size_t ai : net.out_arcs(n)) {
      const Node h = net.arc(ai).head;
      if (--indeg[slot(h)] == 0) ready.push_back(h);
    }
  }
  if (order.size() != g + 2) return std::nullopt;
  return order;
}

/// Re-checks every arc's rule tags and the degree guarantees against the network's own groups.
/// Returns one message per violation; empty when the network is consistent.
inline std::vector<std::string> audit_rules(const FlowNetwork& net, const SceneConfig& scene) {
  std::vector<std::string> problems;
  const auto layers = net.layers();
  auto frame_groups = [&](FrameId f) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < net.group_count(); ++i) {
      if (net.group(i).key.frame == f) out.push_back(i);
    }
    return out;
  };
  auto any_overlap = [&](std::size_t i, FrameId other, bool other_is_prev) {
    for (std::size_t j : frame_groups(other)) {
      const auto& a = other_is_prev ? net.group(j) : net.group(i);
      const auto& b = other_is_prev ? net.group(i) : net.group(j);
      if (detail::consecutive_overlap(a, b, scene.overlap_rule)) return true;
    }
    return false;
  };

  for (const auto& a : net.arcs()) {
    const std::string name = net.label(a.tail) + "->" + net.label(a.head);
    if (a.rules == 0) problems.push_back(name + ": no rule tag");
    if (a.tail.is_group() && a.head.is_group()) {
      const auto& p = net.group(a.tail.index);
      const auto& q = net.group(a.head.index);
      if (a.rules != rule_bit(ArcRule::overlap)) problems.push_back(name + ": group arc must carry only rule (1)");
      if (q.key.frame != p.key.frame + 1 || !detail::consecutive_overlap(p, q, scene.overlap_rule)) {
        problems.push_back(name + ": rule (1) does not hold");
      }
      continue;
    }
    if (a.has(ArcRule::overlap)) problems.push_back(name + ": S/T arc tagged with rule (1)");
    const bool from_source = a.tail.is_source();
    const std::size_t gi = from_source ? a.head.index : a.tail.index;
    const auto& g = net.group(gi);
    if (a.has(ArcRule::scene_zone)) {
      const bool ok = from_source ? detail::touches_entry(g, scene) : detail::touches_exit(g, scene);
      if (!ok) problems.push_back(name + ": rule (2) does not hold");
    }
    if (a.has(ArcRule::window_edge) && g.key.frame != (from_source ? layers.first : layers.last)) {
      problems.push_back(name + ": rule (3) does not hold");
    }
    if (a.has(ArcRule::unmatched)) {
      const FrameId other = from_source ? g.key.frame - 1 : g.key.frame + 1;
      if (layers.contains(other) && any_overlap(gi, other, from_source)) {
        problems.push_back(name + ": rule (4) does not hold");
      }
    }
  }
  for (std::size_t i = 0; i < net.group_count(); ++i) {
    if (net.in_arcs(Node::group(i)).empty() || net.out_arcs(Node::group(i)).empty()) {
      problems.push_back(net.label(Node::group(i)) + ": in-degree or out-degree is zero");
    }
  }
  if (!net.in_arcs(Node::source()).empty() || !net.out_arcs(Node::sink()).empty()) {
    problems.push_back("S has in-arcs or T has out-arcs");
  }
  return problems;
}

/// Graphviz description: vertices with their predictions, arcs labelled with rule tags.
inline std::string to_dot(const FlowNetwork& net) {
  std::ostringstream os;
  os << "digraph flow {\n  rankdir=LR;\n  \"S\" [shape=box];\n  \"T\" [shape=box];\n";
  for (std::size_t i = 0; i < net.group_count(); ++i) {
    const auto& g = net.group(i);
    os << "  \"" << to_string(g.key) << "\" [label=\"" << to_string(g.key) << "\\n" << g.predicted_count
       << "\"];\n";
  }
  for (const auto& a : net.arcs()) {
    os << "  \"" << net.label(a.tail) << "\" -> \"" << net.label(a.head) << "\" [label=\"" << rule_names(a.rules)
       << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace flowcount
