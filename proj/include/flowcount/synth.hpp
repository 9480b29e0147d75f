#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "flowcount/calibration.hpp"
#include "flowcount/error.hpp"
#include "flowcount/network.hpp"
#include "flowcount/observation.hpp"
#include "flowcount/region.hpp"
#include "flowcount/union_find.hpp"

namespace flowcount {

enum class NoiseKind { gaussian, laplacian, none };

inline std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::laplacian: return "laplacian";
    case NoiseKind::none: return "none";
  }
  return "none";
}

inline NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "gaussian") return NoiseKind::gaussian;
  if (s == "laplacian") return NoiseKind::laplacian;
  if (s == "none") return NoiseKind::none;
  throw InputError("unknown noise kind '" + s + "'");
}

/// Additive noise on true group counts. `scale` is sigma for gaussian and b for laplacian;
/// kind none is the zero-noise limit. With probability `outlier_rate` a draw also gets
/// +-outlier_scale with a random sign.
struct NoiseModel {
  NoiseKind kind = NoiseKind::gaussian;
  double scale = 1.0;
  double outlier_rate = 0.0;
  double outlier_scale = 0.0;

  void validate() const {
    if (kind != NoiseKind::none && !(scale > 0.0)) throw InputError("noise scale must be > 0");
    if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0)) throw InputError("outlier rate must lie in [0, 1]");
    if (!(outlier_scale >= 0.0)) throw InputError("outlier scale must be >= 0");
  }
};

/// A pedestrian placed by hand rather than by the arrival process.
struct PedestrianSeed {
  FrameId appear = 0;
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  /// From this frame on the pedestrian moves with (turn_vx, turn_vy).
  std::optional<FrameId> turn_at;
  double turn_vx = 0.0;
  double turn_vy = 0.0;
  /// Never leaves through T.
  bool persistent = false;
};

struct ScenarioSpec {
  FrameId first_frame = 0;
  std::int64_t n_frames = 100;
  SceneConfig scene{{0, 0, 20, 240}, {300, 0, 320, 240}, OverlapRule::region_intersection};
  /// Mean Poisson arrivals per frame, spawning inside S and heading for a point inside T.
  double arrival_rate = 0.2;
  double speed = 3.0;
  /// Relative speed spread: each arrival walks at speed * (1 + U(-jitter, jitter)).
  double speed_jitter = 0.3;
  double body_width = 10.0;
  double body_height = 24.0;
  /// Pedestrians whose centres lie within this distance (single linkage) share a group.
  double grouping_radius = 15.0;
  NoiseModel noise;
  /// Probability of dropping a one-to-one link between consecutive groups (explicit-adjacency only).
  double segmentation_failure_rate = 0.0;
  std::vector<PedestrianSeed> pedestrians;
  std::uint64_t seed = 1;

  FrameRange frames() const { return {first_frame, first_frame + n_frames - 1}; }

  /// Per-frame displacement above this would break consecutive-frame overlap.
  double max_step() const { return 0.9 * std::min(body_width, body_height); }

  void validate() const {
    scene.validate();
    noise.validate();
    if (first_frame < 0) throw InputError("first frame must be >= 0");
    if (n_frames < 0) throw InputError("frame count must be >= 0");
    if (!(arrival_rate >= 0.0)) throw InputError("arrival rate must be >= 0");
    if (!(speed > 0.0)) throw InputError("speed must be > 0");
    if (!(speed_jitter >= 0.0 && speed_jitter < 1.0)) throw InputError("speed jitter must lie in [0, 1)");
    if (!(body_width > 0.0 && body_height > 0.0)) throw InputError("body size must be positive");
    if (!(grouping_radius >= 0.0)) throw InputError("grouping radius must be >= 0");
    if (!(segmentation_failure_rate >= 0.0 && segmentation_failure_rate <= 1.0)) {
      throw InputError("segmentation failure rate must lie in [0, 1]");
    }
    if (segmentation_failure_rate > 0.0 && scene.overlap_rule != OverlapRule::explicit_adjacency) {
      throw InputError("segmentation failure injection requires the explicit-adjacency overlap rule");
    }
    const double cap = max_step();
    for (const auto& p : pedestrians) {
      if (std::hypot(p.vx, p.vy) > cap || std::hypot(p.turn_vx, p.turn_vy) > cap) {
        throw InputError("seeded pedestrian moves further than its body size per frame");
      }
      if (p.appear > first_frame && !overlaps(body(p.x, p.y), scene.entry)) {
        throw InputError("seeded pedestrian appearing after the first frame must start inside S");
      }
    }
  }

  Box body(double x, double y) const {
    return {x - body_width / 2, y - body_height / 2, x + body_width / 2, y + body_height / 2};
  }
};

struct TruthGroup {
  GroupKey key;
  std::int64_t count = 0;
  /// Pedestrian ids, ascending.
  std::vector<std::int64_t> members;
};

/// Integer flow on one arc; an empty tail is S and an empty head is T.
struct TruthFlow {
  std::optional<GroupKey> tail;
  std::optional<GroupKey> head;
  std::int64_t flow = 0;
};

struct GroundTruth {
  FrameRange frames;
  std::vector<TruthGroup> groups;
  std::vector<TruthFlow> flows;
  /// People in view per frame, starting at frames.first.
  std::vector<std::int64_t> totals;

  std::map<FrameId, double> totals_by_frame() const {
    std::map<FrameId, double> out;
    for (std::size_t k = 0; k < totals.size(); ++k) out[frames.first + static_cast<FrameId>(k)] = static_cast<double>(totals[k]);
    return out;
  }
};

struct Scenario {
  std::vector<GroupObservation> observations;
  GroundTruth truth;
};

inline double sample_noise(const NoiseModel& m, std::mt19937_64& rng) {
  double e = 0.0;
  if (m.kind == NoiseKind::gaussian) {
    e = std::normal_distribution<double>(0.0, m.scale)(rng);
  } else if (m.kind == NoiseKind::laplacian) {
    std::exponential_distribution<double> ex(1.0);
    const double a = ex(rng);
    e = m.scale * (a - ex(rng));
  }
  if (m.outlier_rate > 0.0 && std::bernoulli_distribution(m.outlier_rate)(rng)) {
    e += std::bernoulli_distribution(0.5)(rng) ? m.outlier_scale : -m.outlier_scale;
  }
  return e;
}

namespace detail {

struct Walker {
  std::int64_t id = 0;
  FrameId born = 0;
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  std::optional<FrameId> turn_at;
  double turn_vx = 0.0;
  double turn_vy = 0.0;
  bool persistent = false;
};

struct FrameGroups {
  std::vector<TruthGroup> groups;
  std::vector<Box> boxes;
  /// Group index of every walker alive in the frame, by walker id.
  std::map<std::int64_t, std::size_t> group_of;
};

inline FrameGroups group_walkers(const ScenarioSpec& spec, FrameId frame, const std::vector<Walker>& walkers) {
  const std::size_t n = walkers.size();
  UnionFind uf(n);
  const double r2 = spec.grouping_radius * spec.grouping_radius;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const double dx = walkers[a].x - walkers[b].x;
      const double dy = walkers[a].y - walkers[b].y;
      if (dx * dx + dy * dy <= r2) uf.unite(a, b);
    }
  }
  // Walkers are kept in id order, so labels number groups by their smallest pedestrian id.
  const auto label = uf.labels();
  FrameGroups fg;
  for (std::size_t a = 0; a < n; ++a) {
    const Box b = spec.body(walkers[a].x, walkers[a].y);
    if (label[a] == fg.groups.size()) {
      fg.groups.push_back({{frame, static_cast<GroupId>(label[a])}, 0, {}});
      fg.boxes.push_back(b);
    }
    auto& g = fg.groups[label[a]];
    g.members.push_back(walkers[a].id);
    ++g.count;
    Box& bb = fg.boxes[label[a]];
    bb = {std::min(bb.x_min, b.x_min), std::min(bb.y_min, b.y_min), std::max(bb.x_max, b.x_max),
          std::max(bb.y_max, b.y_max)};
    fg.group_of[walkers[a].id] = label[a];
  }
  return fg;
}

inline Walker arrival(const ScenarioSpec& spec, std::int64_t id, FrameId frame, std::mt19937_64& rng) {
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const Box& s = spec.scene.entry;
  const Box& t = spec.scene.exit;
  Walker w;
  w.id = id;
  w.born = frame;
  w.x = uniform(s.x_min, s.x_max);
  w.y = uniform(s.y_min, s.y_max);
  const double tx = uniform(t.x_min, t.x_max);
  const double ty = uniform(t.y_min, t.y_max);
  const double speed = std::min(spec.speed * (1.0 + uniform(-spec.speed_jitter, spec.speed_jitter)), spec.max_step());
  const double d = std::hypot(tx - w.x, ty - w.y);
  if (d > 0.0) {
    w.vx = speed * (tx - w.x) / d;
    w.vy = speed * (ty - w.y) / d;
  }
  return w;
}

}  // namespace detail

/// Simulates the scenario and returns noisy observations with the exact flow that produced them.
///
/// Observations always carry boxes together with geometric prev_adjacency and touches_S/T
/// flags, so they serve either overlap rule. With a calibration table the weights come from it.
inline Scenario generate(const ScenarioSpec& spec, const std::optional<CalibrationTable>& calibration = std::nullopt) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::mt19937_64 noise_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 failure_rng(spec.seed ^ 0xc2b2ae3d27d4eb4fULL);

  Scenario out;
  GroundTruth& truth = out.truth;
  truth.frames = spec.frames();
  truth.totals.assign(static_cast<std::size_t>(std::max<std::int64_t>(spec.n_frames, 0)), 0);

  std::vector<detail::Walker> alive;
  std::int64_t next_id = 0;
  std::optional<detail::FrameGroups> prev;
  std::vector<GroupObservation> prev_obs;
  std::set<std::int64_t> leaving;

  for (FrameId t = truth.frames.first; t <= truth.frames.last; ++t) {
    std::set<std::int64_t> newcomers;
    for (const auto& p : spec.pedestrians) {
      if (p.appear != t) continue;
      alive.push_back({next_id, t, p.x, p.y, p.vx, p.vy, p.turn_at, p.turn_vx, p.turn_vy, p.persistent});
      newcomers.insert(next_id++);
    }
    if (spec.arrival_rate > 0.0) {
      const int k = std::poisson_distribution<int>(spec.arrival_rate)(rng);
      for (int a = 0; a < k; ++a) {
        alive.push_back(detail::arrival(spec, next_id, t, rng));
        newcomers.insert(next_id++);
      }
    }

    auto fg = detail::group_walkers(spec, t, alive);
    truth.totals[static_cast<std::size_t>(t - truth.frames.first)] = static_cast<std::int64_t>(alive.size());

    std::vector<GroupObservation> obs(fg.groups.size());
    for (std::size_t i = 0; i < fg.groups.size(); ++i) {
      auto& o = obs[i];
      o.key = fg.groups[i].key;
      o.region = Region::from_box(fg.boxes[i]);
      const double noisy = static_cast<double>(fg.groups[i].count) + sample_noise(spec.noise, noise_rng);
      o.predicted_count = std::max(0.0, noisy);
      o.weight = calibration ? apply_calibration(o.predicted_count, *calibration).weight : 1.0;
      o.touches_source = overlaps(fg.boxes[i], spec.scene.entry);
      o.touches_sink = overlaps(fg.boxes[i], spec.scene.exit);
      if (prev) {
        for (std::size_t p = 0; p < prev->groups.size(); ++p) {
          if (overlaps(prev->boxes[p], fg.boxes[i])) o.prev_adjacency.push_back(static_cast<GroupId>(p));
        }
      }
    }

    // Person-level transitions from the previous frame, aggregated per group pair.
    std::map<std::pair<std::size_t, std::size_t>, std::int64_t> links;
    std::map<std::size_t, std::int64_t> from_source;
    for (const auto& w : alive) {
      const std::size_t q = fg.group_of.at(w.id);
      if (prev && !newcomers.contains(w.id)) {
        ++links[{prev->group_of.at(w.id), q}];
      } else {
        ++from_source[q];
      }
    }

    if (prev && spec.segmentation_failure_rate > 0.0) {
      std::vector<std::size_t> succ(prev->groups.size(), 0);
      std::vector<std::size_t> pred(fg.groups.size(), 0);
      for (std::size_t q = 0; q < obs.size(); ++q) {
        pred[q] = obs[q].prev_adjacency.size();
        for (GroupId p : obs[q].prev_adjacency) ++succ[static_cast<std::size_t>(p)];
      }
      for (std::size_t q = 0; q < obs.size(); ++q) {
        if (pred[q] != 1) continue;
        const auto p = static_cast<std::size_t>(obs[q].prev_adjacency.front());
        if (succ[p] != 1 || !std::bernoulli_distribution(spec.segmentation_failure_rate)(failure_rng)) continue;
        obs[q].prev_adjacency.clear();
        if (auto it = links.find({p, q}); it != links.end()) {
          // The dropped link's people now leave through T and re-enter from S.
          truth.flows.push_back({prev->groups[p].key, std::nullopt, it->second});
          from_source[q] += it->second;
          links.erase(it);
        }
      }
    }

    for (const auto& [pq, n] : links) truth.flows.push_back({prev->groups[pq.first].key, fg.groups[pq.second].key, n});
    for (const auto& [q, n] : from_source) truth.flows.push_back({std::nullopt, fg.groups[q].key, n});
    if (prev) {
      std::map<std::size_t, std::int64_t> exits;
      for (std::int64_t id : leaving) ++exits[prev->group_of.at(id)];
      for (const auto& [p, n] : exits) truth.flows.push_back({prev->groups[p].key, std::nullopt, n});
    }

    for (auto& o : obs) out.observations.push_back(o);
    for (const auto& g : fg.groups) truth.groups.push_back(g);

    // Leave after this frame when touching T (never in the frame of arrival).
    leaving.clear();
    std::vector<detail::Walker> staying;
    for (const auto& w : alive) {
      const bool exits = !w.persistent && t > w.born && overlaps(spec.body(w.x, w.y), spec.scene.exit);
      if (exits) {
        leaving.insert(w.id);
      } else {
        staying.push_back(w);
      }
    }
    if (t == truth.frames.last) {
      std::map<std::size_t, std::int64_t> exits;
      for (const auto& w : alive) ++exits[fg.group_of.at(w.id)];
      for (const auto& [p, n] : exits) truth.flows.push_back({fg.groups[p].key, std::nullopt, n});
    }
    for (auto& w : staying) {
      const bool turned = w.turn_at && t + 1 >= *w.turn_at;
      w.x += turned ? w.turn_vx : w.vx;
      w.y += turned ? w.turn_vy : w.vy;
    }
    alive = std::move(staying);
    prev = std::move(fg);
  }
  return out;
}

/// Whether `truth` is a valid integer (S,T)-flow on the network built from `observations`
/// over the truth's full frame range: every positive flow rides an arc, each group's inflow
/// and outflow equal its true count, and S emits what T absorbs.
inline bool true_flow_check(std::span<const GroupObservation> observations, const GroundTruth& truth,
                            const SceneConfig& scene) {
  const ObservationStore store(observations);
  const FlowNetwork net = build_network(store, scene, truth.frames);
  if (net.group_count() != truth.groups.size()) return false;

  auto node_of = [&](const std::optional<GroupKey>& k, Node end) -> std::optional<Node> {
    if (!k) return end;
    const auto i = net.find(*k);
    if (!i) return std::nullopt;
    return Node::group(*i);
  };

  std::vector<std::int64_t> inflow(net.group_count(), 0);
  std::vector<std::int64_t> outflow(net.group_count(), 0);
  std::int64_t from_s = 0;
  std::int64_t into_t = 0;
  for (const auto& f : truth.flows) {
    if (f.flow < 0) return false;
    if (f.flow == 0) continue;
    const auto tail = node_of(f.tail, Node::source());
    const auto head = node_of(f.head, Node::sink());
    if (!tail || !head || !net.find_arc(*tail, *head)) return false;
    if (tail->is_group()) outflow[tail->index] += f.flow;
    if (head->is_group()) inflow[head->index] += f.flow;
    if (tail->is_source()) from_s += f.flow;
    if (head->is_sink()) into_t += f.flow;
  }
  for (const auto& g : truth.groups) {
    const auto i = net.find(g.key);
    if (!i || g.count < 0) return false;
    if (inflow[*i] != g.count || outflow[*i] != g.count) return false;
  }
  return from_s == into_t;
}

/// One persistent cluster walking slowly along a corridor, clear of S and T, so every window
/// holds a single path of groups with a constant true count.
inline ScenarioSpec corridor_scenario(std::int64_t n_frames, const NoiseModel& noise, std::uint64_t seed,
                                      int cluster_size = 4) {
  ScenarioSpec spec;
  spec.n_frames = n_frames;
  spec.scene = {{0, 0, 20, 120}, {580, 0, 600, 120}, OverlapRule::region_intersection};
  spec.arrival_rate = 0.0;
  spec.noise = noise;
  spec.seed = seed;
  spec.grouping_radius = 15.0;
  for (int k = 0; k < cluster_size; ++k) {
    PedestrianSeed p;
    p.appear = spec.first_frame;
    p.x = 150.0 + 4.0 * k;
    p.y = 50.0 + 2.0 * (k % 3);
    p.vx = 1.0;
    p.persistent = true;
    spec.pedestrians.push_back(p);
  }
  return spec;
}

}  // namespace flowcount
