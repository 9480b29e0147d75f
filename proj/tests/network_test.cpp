#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>

#include "test_support.hpp"

using namespace flowcount;
using fctest::box_group;

namespace {

using ArcKey = std::pair<std::string, std::string>;

std::map<ArcKey, RuleSet> arc_map(const FlowNetwork& net) {
  std::map<ArcKey, RuleSet> out;
  for (const auto& a : net.arcs()) out[{net.label(a.tail), net.label(a.head)}] = a.rules;
  return out;
}

std::set<ArcKey> arc_set(const FlowNetwork& net) {
  std::set<ArcKey> out;
  for (const auto& a : net.arcs()) out.insert({net.label(a.tail), net.label(a.head)});
  return out;
}

/// Straight transcription of the four construction rules over box observations.
std::map<ArcKey, RuleSet> reference_arcs(const std::vector<GroupObservation>& obs, const SceneConfig& scene,
                                         FrameRange window) {
  std::map<ArcKey, RuleSet> out;
  auto name = [](const GroupObservation& g) { return to_string(g.key); };
  for (const auto& p : obs) {
    if (!window.contains(p.key.frame)) continue;
    bool pred = false;
    bool succ = false;
    for (const auto& q : obs) {
      if (!window.contains(q.key.frame)) continue;
      const bool meets = intersection_area(p.region->box, q.region->box) > 0.0;
      if (q.key.frame == p.key.frame + 1 && meets) {
        out[{name(p), name(q)}] |= 1;
        succ = true;
      }
      if (q.key.frame == p.key.frame - 1 && meets) pred = true;
    }
    if (intersection_area(p.region->box, scene.entry) > 0.0) out[{"S", name(p)}] |= 2;
    if (intersection_area(p.region->box, scene.exit) > 0.0) out[{name(p), "T"}] |= 2;
    if (p.key.frame == window.first) out[{"S", name(p)}] |= 4;
    if (p.key.frame == window.last) out[{name(p), "T"}] |= 4;
    if (!pred) out[{"S", name(p)}] |= 8;
    if (!succ) out[{name(p), "T"}] |= 8;
  }
  return out;
}

std::vector<GroupObservation> random_boxes(std::mt19937_64& rng, int frames, int per_frame) {
  std::uniform_real_distribution<double> pos(0.0, 90.0);
  std::uniform_real_distribution<double> size(2.0, 25.0);
  std::uniform_int_distribution<int> count(0, per_frame);
  std::vector<GroupObservation> obs;
  for (int f = 0; f < frames; ++f) {
    const int k = count(rng);
    for (int i = 0; i < k; ++i) {
      const double x = pos(rng);
      const double y = pos(rng);
      obs.push_back(box_group(f, i, {x, y, x + size(rng), y + size(rng)}));
    }
  }
  return obs;
}

const SceneConfig kRandomScene{{0, 0, 8, 100}, {92, 0, 100, 100}, OverlapRule::region_intersection};

}  // namespace

TEST(BuildNetwork, ComponentOfP21HasTheExpectedArcs) {
  fctest::ThreeClusters fx;
  const ObservationStore store(fx.observations);
  const auto net = window_network(store, fx.scene, 2, 1);
  EXPECT_EQ(net.layers(), (FrameRange{1, 3}));
  const auto subs = decompose(net);
  ASSERT_EQ(subs.size(), 3u);
  const auto& h1 = subs[fctest::component_of(subs, {1, 2})].network;
  const std::set<ArcKey> expected{{"S", "P(1,2)"},      {"P(1,2)", "P(2,2)"}, {"P(1,2)", "P(2,3)"},
                                  {"P(2,2)", "P(3,1)"}, {"P(2,3)", "P(3,1)"}, {"P(3,1)", "T"}};
  EXPECT_EQ(arc_set(h1), expected);
}

TEST(BuildNetwork, ThreeClusterComponentsPartitionTheGroups) {
  fctest::ThreeClusters fx;
  const ObservationStore store(fx.observations);
  const auto subs = decompose(window_network(store, fx.scene, 2, 1));
  ASSERT_EQ(subs.size(), 3u);
  std::set<std::size_t> sizes;
  for (const auto& s : subs) sizes.insert(s.network.group_count());
  EXPECT_EQ(sizes, (std::set<std::size_t>{3, 4}));
  const auto& h2 = subs[fctest::component_of(subs, {1, 1})].network;
  EXPECT_TRUE(h2.find({1, 3}));
  EXPECT_TRUE(h2.find({2, 1}));
  EXPECT_TRUE(h2.find({3, 2}));
  // Decomposition orders components by their smallest key.
  EXPECT_EQ(fctest::component_of(subs, {1, 1}), 0u);
  EXPECT_EQ(fctest::component_of(subs, {1, 2}), 1u);
  EXPECT_EQ(fctest::component_of(subs, {1, 4}), 2u);
}

TEST(BuildNetwork, SingleGroupSingleFrame) {
  const std::vector<GroupObservation> obs{box_group(0, 0, {40, 40, 50, 50})};
  const auto net = build_network(obs, kRandomScene, {0, 0});
  EXPECT_EQ(arc_set(net), (std::set<ArcKey>{{"S", "P(0,0)"}, {"P(0,0)", "T"}}));
}

TEST(BuildNetwork, IsolatedInteriorGroupGetsBothUnmatchedArcs) {
  const std::vector<GroupObservation> obs{box_group(0, 0, {40, 40, 50, 50}), box_group(1, 0, {40, 40, 50, 50}),
                                          box_group(1, 1, {70, 10, 75, 15}), box_group(2, 0, {40, 40, 50, 50})};
  const auto net = build_network(obs, kRandomScene, {0, 2});
  const auto arcs = arc_map(net);
  EXPECT_EQ(arcs.at({"S", "P(1,1)"}), rule_bit(ArcRule::unmatched));
  EXPECT_EQ(arcs.at({"P(1,1)", "T"}), rule_bit(ArcRule::unmatched));
  EXPECT_FALSE(arcs.contains({"S", "P(1,0)"}));
}

TEST(BuildNetwork, RulesMergeIntoOneTaggedArc) {
  // In the first frame and touching S: rules (2), (3) and (4) all give <S,P>.
  const std::vector<GroupObservation> obs{box_group(0, 0, {2, 0, 12, 10})};
  const auto net = build_network(obs, kRandomScene, {0, 0});
  ASSERT_EQ(net.arc_count(), 2u);
  EXPECT_EQ(arc_map(net).at({"S", "P(0,0)"}), 2 | 4 | 8);
  EXPECT_EQ(rule_names(2 | 4 | 8), "scene+edge+unmatched");
}

TEST(BuildNetwork, SharedEntryExitZoneGivesBothArcs) {
  const SceneConfig scene{{0, 0, 10, 10}, {0, 0, 10, 10}, OverlapRule::region_intersection};
  const std::vector<GroupObservation> obs{box_group(0, 0, {20, 20, 30, 30}), box_group(1, 0, {5, 5, 25, 25}),
                                          box_group(2, 0, {20, 20, 30, 30})};
  const auto arcs = arc_map(build_network(obs, scene, {0, 2}));
  EXPECT_EQ(arcs.at({"S", "P(1,0)"}), rule_bit(ArcRule::scene_zone));
  EXPECT_EQ(arcs.at({"P(1,0)", "T"}), rule_bit(ArcRule::scene_zone));
}

TEST(BuildNetwork, EmptyWindowHasNoArcs) {
  const std::vector<GroupObservation> obs{box_group(0, 0, {1, 1, 2, 2})};
  const auto net = build_network(obs, kRandomScene, {5, 4});
  EXPECT_EQ(net.group_count(), 0u);
  EXPECT_EQ(net.arc_count(), 0u);
  EXPECT_TRUE(decompose(net).empty());
}

TEST(BuildNetwork, DuplicateKeyRejected) {
  const std::vector<GroupObservation> obs{box_group(0, 0, {1, 1, 2, 2}), box_group(0, 0, {3, 3, 4, 4})};
  EXPECT_THROW(build_network(obs, kRandomScene, {0, 0}), InputError);
}

TEST(BuildNetwork, MissingRegionRejectedUnderIntersectionRule) {
  GroupObservation o;
  o.key = {0, 0};
  EXPECT_THROW(build_network(std::vector{o}, kRandomScene, {0, 0}), InputError);
}

TEST(BuildNetwork, ExplicitAdjacencyUsesSuppliedLinks) {
  std::vector<GroupObservation> obs(3);
  obs[0].key = {0, 0};
  obs[0].touches_source = true;
  obs[1].key = {1, 0};
  obs[1].prev_adjacency = {0};
  obs[2].key = {1, 1};
  obs[2].touches_sink = true;
  const auto arcs = arc_map(build_network(obs, fctest::adjacency_scene(), {0, 1}));
  EXPECT_TRUE(arcs.contains({"P(0,0)", "P(1,0)"}));
  EXPECT_FALSE(arcs.contains({"P(0,0)", "P(1,1)"}));
  EXPECT_EQ(arcs.at({"S", "P(1,1)"}), rule_bit(ArcRule::unmatched));
  EXPECT_EQ(arcs.at({"P(1,1)", "T"}), 2 | 4 | 8);
}

TEST(BuildNetwork, ExplicitAdjacencyRejectsUnknownPredecessor) {
  std::vector<GroupObservation> obs(2);
  obs[0].key = {0, 0};
  obs[1].key = {1, 0};
  obs[1].prev_adjacency = {7};
  EXPECT_THROW(build_network(obs, fctest::adjacency_scene(), {0, 1}), InputError);
}

TEST(BuildNetwork, MatchesRuleByRuleReference) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto obs = random_boxes(rng, 6, 5);
    const FrameRange window{1, 4};
    const auto net = build_network(obs, kRandomScene, window);
    EXPECT_EQ(arc_map(net), reference_arcs(obs, kRandomScene, window)) << "trial " << trial;
  }
}

TEST(BuildNetwork, InvariantsHoldOnRandomInputs) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const auto obs = random_boxes(rng, 8, 6);
    const ObservationStore store(obs);
    if (store.empty()) continue;
    const auto net = window_network(store, kRandomScene, 4, 2);
    EXPECT_TRUE(topological_order(net).has_value());
    EXPECT_TRUE(audit_rules(net, kRandomScene).empty());
    for (const auto& a : net.arcs()) {
      if (a.tail.is_group() && a.head.is_group()) {
        EXPECT_EQ(net.group(a.head.index).key.frame, net.group(a.tail.index).key.frame + 1);
      }
    }
    EXPECT_EQ(arc_map(net), arc_map(window_network(store, kRandomScene, 4, 2)));
  }
}

TEST(AuditRules, FlagsAMistaggedArc) {
  const std::vector<GroupObservation> obs{box_group(0, 0, {40, 40, 50, 50}), box_group(1, 0, {40, 40, 50, 50})};
  const auto good = build_network(obs, kRandomScene, {0, 1});
  auto arcs = good.arcs();
  for (auto& a : arcs) {
    if (a.tail.is_source()) a.rules |= rule_bit(ArcRule::scene_zone);
  }
  const FlowNetwork bad(good.groups(), arcs, good.layers());
  EXPECT_TRUE(audit_rules(good, kRandomScene).empty());
  EXPECT_FALSE(audit_rules(bad, kRandomScene).empty());
}

TEST(WindowFrames, ClipsToSequence) {
  EXPECT_EQ(window_frames({1, 3}, 2, 1), (FrameRange{1, 3}));
  EXPECT_EQ(window_frames({1, 3}, 1, 1), (FrameRange{1, 2}));
  EXPECT_EQ(window_frames({0, 199}, 100, 11), (FrameRange{89, 111}));
  EXPECT_EQ(window_frames({0, 199}, 100, 11).size(), 23u);
  EXPECT_THROW(window_frames({0, 5}, 2, 0), InputError);
}

TEST(WindowNetwork, LeftTruncationUsesEdgeRule) {
  fctest::ThreeClusters fx;
  const ObservationStore store(fx.observations);
  const auto net = window_network(store, fx.scene, 1, 1);
  EXPECT_EQ(net.layers(), (FrameRange{1, 2}));
  const auto arcs = arc_map(net);
  EXPECT_TRUE(arcs.at({"P(2,1)", "T"}) & rule_bit(ArcRule::window_edge));
  EXPECT_FALSE(net.find({3, 1}));
}

TEST(Decompose, IsolatedGroupsAreSeparateComponents) {
  std::vector<GroupObservation> obs;
  for (int i = 0; i < 10; ++i) obs.push_back(box_group(0, i, {10.0 * i, 0, 10.0 * i + 5, 5}));
  EXPECT_EQ(decompose(build_network(obs, kRandomScene, {0, 0})).size(), 10u);
}

TEST(Decompose, ChainIsOneComponent) {
  std::vector<GroupObservation> obs;
  for (int f = 0; f < 6; ++f) obs.push_back(box_group(f, 0, {40, 40, 50, 50}));
  const auto subs = decompose(build_network(obs, kRandomScene, {0, 5}));
  ASSERT_EQ(subs.size(), 1u);
  EXPECT_EQ(is_path(subs[0])->size(), 6u);
}

TEST(Decompose, MatchesSearchOracleAndPartitions) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const auto obs = random_boxes(rng, 6, 6);
    const ObservationStore store(obs);
    if (store.empty()) continue;
    const auto net = build_network(store, kRandomScene, store.frames());
    const auto subs = decompose(net);

    // Depth-first search over undirected group-group arcs.
    const std::size_t g = net.group_count();
    std::vector<std::vector<std::size_t>> adj(g);
    for (const auto& a : net.arcs()) {
      if (a.tail.is_group() && a.head.is_group()) {
        adj[a.tail.index].push_back(a.head.index);
        adj[a.head.index].push_back(a.tail.index);
      }
    }
    std::vector<int> comp(g, -1);
    int count = 0;
    for (std::size_t s = 0; s < g; ++s) {
      if (comp[s] >= 0) continue;
      std::vector<std::size_t> stack{s};
      comp[s] = count;
      while (!stack.empty()) {
        const auto u = stack.back();
        stack.pop_back();
        for (auto v : adj[u]) {
          if (comp[v] < 0) {
            comp[v] = count;
            stack.push_back(v);
          }
        }
      }
      ++count;
    }
    ASSERT_EQ(subs.size(), static_cast<std::size_t>(count));

    std::vector<int> seen(g, 0);
    std::size_t arcs = 0;
    for (std::size_t c = 0; c < subs.size(); ++c) {
      const auto& sub = subs[c];
      arcs += sub.network.arc_count();
      for (std::size_t k = 0; k < sub.parent_group.size(); ++k) {
        const auto pg = sub.parent_group[k];
        ++seen[pg];
        EXPECT_EQ(comp[pg], comp[sub.parent_group[0]]);
        EXPECT_EQ(sub.network.group(k).key, net.group(pg).key);
      }
      if (c > 0) {
        EXPECT_LT(subs[c - 1].network.group(0).key, sub.network.group(0).key);
      }
    }
    EXPECT_EQ(arcs, net.arc_count());
    for (int s : seen) EXPECT_EQ(s, 1);
  }
}

TEST(IsPath, ThreeClusterComponents) {
  fctest::ThreeClusters fx;
  const ObservationStore store(fx.observations);
  const auto subs = decompose(window_network(store, fx.scene, 2, 1));
  const auto& h3 = subs[fctest::component_of(subs, {1, 4})];
  const auto chain = is_path(h3);
  ASSERT_TRUE(chain.has_value());
  ASSERT_EQ(chain->size(), 3u);
  EXPECT_EQ(h3.network.group((*chain)[0]).key, (GroupKey{1, 4}));
  EXPECT_EQ(h3.network.group((*chain)[1]).key, (GroupKey{2, 4}));
  EXPECT_EQ(h3.network.group((*chain)[2]).key, (GroupKey{3, 3}));
  EXPECT_FALSE(is_path(subs[fctest::component_of(subs, {1, 2})]).has_value());
  EXPECT_FALSE(is_path(subs[fctest::component_of(subs, {1, 1})]).has_value());
}

TEST(IsPath, SingleVertex) {
  const std::vector<GroupObservation> obs{box_group(0, 0, {40, 40, 50, 50})};
  const auto chain = is_path(build_network(obs, kRandomScene, {0, 0}));
  ASSERT_TRUE(chain.has_value());
  EXPECT_EQ(*chain, std::vector<std::size_t>{0});
}

TEST(ToDot, ListsVerticesAndTaggedArcs) {
  fctest::ThreeClusters fx;
  const auto dot = to_dot(build_network(fx.observations, fx.scene, {1, 3}));
  EXPECT_NE(dot.find("digraph"), std::string::npos);
  EXPECT_NE(dot.find("\"S\" -> \"P(1,2)\" [label=\"edge+unmatched\"]"), std::string::npos);
  EXPECT_NE(dot.find("\"P(1,2)\" -> \"P(2,3)\" [label=\"overlap\"]"), std::string::npos);
}
