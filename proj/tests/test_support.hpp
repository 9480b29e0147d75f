#pragma once

// Fixtures and independent oracles shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "flowcount/flowcount.hpp"

namespace fctest {

using namespace flowcount;

inline GroupObservation box_group(FrameId f, GroupId id, Box b, double predicted = 1.0, double weight = 1.0) {
  GroupObservation o;
  o.key = {f, id};
  o.region = Region::from_box(b);
  o.predicted_count = predicted;
  o.weight = weight;
  return o;
}

/// Three frames with three clusters: one branches (1 -> 2 -> 1 groups), one merges then
/// stays single (2 -> 1 -> 1), one is a plain chain. S and T lie at the far left/right edges.
struct ThreeClusters {
  SceneConfig scene{{0, 0, 5, 100}, {95, 0, 100, 100}, OverlapRule::region_intersection};
  std::vector<GroupObservation> observations;

  ThreeClusters() {
    observations = {
        box_group(1, 1, {10, 40, 18, 60}), box_group(1, 2, {10, 0, 30, 20}),
        box_group(1, 3, {22, 40, 30, 60}), box_group(1, 4, {10, 80, 20, 100}),
        box_group(2, 1, {15, 40, 25, 60}), box_group(2, 2, {10, 0, 20, 20}),
        box_group(2, 3, {20, 0, 30, 20}),  box_group(2, 4, {12, 80, 22, 100}),
        box_group(3, 1, {12, 0, 28, 20}),  box_group(3, 2, {15, 40, 25, 60}),
        box_group(3, 3, {14, 80, 24, 100}),
    };
  }
};

/// Index of the sub-network containing `key`.
inline std::size_t component_of(const std::vector<SubNetwork>& subs, GroupKey key) {
  for (std::size_t c = 0; c < subs.size(); ++c) {
    if (subs[c].network.find(key)) return c;
  }
  return subs.size();
}

/// Random layered observations under the explicit-adjacency rule.
inline std::vector<GroupObservation> random_layered(std::mt19937_64& rng, int layers, int max_per_layer,
                                                    double link_p = 0.5, double zone_p = 0.2) {
  std::uniform_int_distribution<int> count(1, max_per_layer);
  std::bernoulli_distribution link(link_p);
  std::bernoulli_distribution zone(zone_p);
  std::vector<GroupObservation> obs;
  int prev = 0;
  for (int f = 0; f < layers; ++f) {
    const int k = count(rng);
    for (int i = 0; i < k; ++i) {
      GroupObservation o;
      o.key = {f, i};
      o.predicted_count = 1.0;
      for (int p = 0; p < prev; ++p) {
        if (link(rng)) o.prev_adjacency.push_back(p);
      }
      o.touches_source = zone(rng);
      o.touches_sink = zone(rng);
      obs.push_back(o);
    }
    prev = k;
  }
  return obs;
}

inline SceneConfig adjacency_scene() {
  return {{0, 0, 1, 1}, {1, 0, 2, 1}, OverlapRule::explicit_adjacency};
}

/// A weakly connected sub-network with between `min_groups` and `max_groups` group vertices,
/// with targets uniform in [0, 10] and weights uniform in [0.1, 5].
inline FlowProblem random_problem(std::mt19937_64& rng, std::size_t min_groups, std::size_t max_groups) {
  std::uniform_int_distribution<int> layer_count(1, 5);
  std::uniform_real_distribution<double> target(0.0, 10.0);
  std::uniform_real_distribution<double> weight(0.1, 5.0);
  while (true) {
    const auto obs = random_layered(rng, layer_count(rng), 3);
    const ObservationStore store(obs);
    const auto net = build_network(store, adjacency_scene(), store.frames());
    auto subs = decompose(net);
    const auto it = std::max_element(subs.begin(), subs.end(), [](const SubNetwork& a, const SubNetwork& b) {
      return a.network.group_count() < b.network.group_count();
    });
    const std::size_t g = it->network.group_count();
    if (g < min_groups || g > max_groups) continue;
    FlowProblem p = FlowProblem::from_sub(*it);
    for (std::size_t i = 0; i < g; ++i) {
      p.targets[i] = target(rng);
      p.weights[i] = weight(rng);
    }
    return p;
  }
}

/// Constraint matrix over x = (vertex flows, arc flows): in-conservation, out-conservation, S/T balance.
inline Eigen::MatrixXd constraint_matrix(const FlowNetwork& net) {
  const auto g = static_cast<Eigen::Index>(net.group_count());
  const auto m = static_cast<Eigen::Index>(net.arc_count());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(2 * g + 1, g + m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Arc& a = net.arc(static_cast<std::size_t>(j));
    if (a.head.is_group()) c(static_cast<Eigen::Index>(a.head.index), g + j) += 1.0;
    if (a.tail.is_group()) c(g + static_cast<Eigen::Index>(a.tail.index), g + j) += 1.0;
    if (a.tail.is_source()) c(2 * g, g + j) += 1.0;
    if (a.head.is_sink()) c(2 * g, g + j) -= 1.0;
  }
  for (Eigen::Index i = 0; i < g; ++i) {
    c(i, i) = -1.0;
    c(g + i, i) = -1.0;
  }
  return c;
}

/// Orthonormal basis of the feasible vertex-flow subspace.
inline Eigen::MatrixXd feasible_vertex_basis(const FlowNetwork& net) {
  const auto g = static_cast<Eigen::Index>(net.group_count());
  const Eigen::MatrixXd c = constraint_matrix(net);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeFullV);
  const double tol = 1e-10 * std::max(1.0, svd.singularValues().size() ? svd.singularValues()(0) : 1.0);
  Eigen::Index rank = 0;
  for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k) {
    if (svd.singularValues()(k) > tol) ++rank;
  }
  const Eigen::MatrixXd null = svd.matrixV().rightCols(c.cols() - rank);
  const Eigen::MatrixXd vertex_part = null.topRows(g);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd2(vertex_part, Eigen::ComputeThinU);
  Eigen::Index r2 = 0;
  for (Eigen::Index k = 0; k < svd2.singularValues().size(); ++k) {
    if (svd2.singularValues()(k) > 1e-10) ++r2;
  }
  return svd2.matrixU().leftCols(r2);
}

/// Null-space weighted least squares: min sum w (f - t)^2 over the feasible vertex subspace.
inline std::vector<double> qp_oracle(const FlowProblem& p) {
  const auto g = static_cast<Eigen::Index>(p.network.group_count());
  const Eigen::MatrixXd b = feasible_vertex_basis(p.network);
  Eigen::VectorXd sw(g);
  Eigen::VectorXd t(g);
  for (Eigen::Index i = 0; i < g; ++i) {
    sw(i) = std::sqrt(p.weights[static_cast<std::size_t>(i)]);
    t(i) = p.targets[static_cast<std::size_t>(i)];
  }
  std::vector<double> f(static_cast<std::size_t>(g), 0.0);
  if (b.cols() == 0) return f;
  const Eigen::MatrixXd a = sw.asDiagonal() * b;
  const Eigen::VectorXd y = a.colPivHouseholderQr().solve(sw.cwiseProduct(t));
  const Eigen::VectorXd x = b * y;
  for (Eigen::Index i = 0; i < g; ++i) f[static_cast<std::size_t>(i)] = x(i);
  return f;
}

struct LpOracleResult {
  double objective = std::numeric_limits<double>::infinity();
  std::vector<double> vertex_flow;
};

/// Exact L1 minimum over the feasible vertex subspace of dimension d: the optimum sits where
/// d independent equations f_i = t_i hold, so every d-subset of groups is tried.
inline LpOracleResult lp_oracle(const FlowProblem& p) {
  const auto g = static_cast<Eigen::Index>(p.network.group_count());
  const Eigen::MatrixXd b = feasible_vertex_basis(p.network);
  const Eigen::Index d = b.cols();
  LpOracleResult best;
  auto score = [&](const Eigen::VectorXd& f) {
    double obj = 0.0;
    for (Eigen::Index i = 0; i < g; ++i) {
      obj += p.weights[static_cast<std::size_t>(i)] * std::abs(f(i) - p.targets[static_cast<std::size_t>(i)]);
    }
    if (obj < best.objective) {
      best.objective = obj;
      best.vertex_flow.assign(f.data(), f.data() + g);
    }
  };
  if (d == 0) {
    score(Eigen::VectorXd::Zero(g));
    return best;
  }
  std::vector<bool> pick(static_cast<std::size_t>(g), false);
  std::fill(pick.begin(), pick.begin() + d, true);
  do {
    Eigen::MatrixXd rows(d, d);
    Eigen::VectorXd rhs(d);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < g; ++i) {
      if (!pick[static_cast<std::size_t>(i)]) continue;
      rows.row(r) = b.row(i);
      rhs(r) = p.targets[static_cast<std::size_t>(i)];
      ++r;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(rows);
    if (lu.rank() < d) continue;
    score(b * lu.solve(rhs));
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

/// S -> a, a -> b, a -> c, b -> T, c -> T with unit weights.
inline FlowProblem y_network(double ta, double tb, double tc) {
  std::vector<GroupObservation> obs(3);
  obs[0].key = {0, 0};
  obs[1].key = {1, 0};
  obs[1].prev_adjacency = {0};
  obs[2].key = {1, 1};
  obs[2].prev_adjacency = {0};
  FlowProblem p = FlowProblem::from_network(build_network(obs, adjacency_scene(), {0, 1}));
  p.targets = {ta, tb, tc};
  return p;
}

/// Path problem S -> v1 -> ... -> vn -> T with the given targets and weights.
inline FlowProblem path_problem(const std::vector<double>& targets, const std::vector<double>& weights) {
  std::vector<GroupObservation> obs;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    GroupObservation o;
    o.key = {static_cast<FrameId>(i), 0};
    o.predicted_count = targets[i];
    o.weight = weights[i];
    if (i > 0) o.prev_adjacency = {0};
    obs.push_back(o);
  }
  const ObservationStore store(obs);
  FlowProblem p = FlowProblem::from_network(build_network(store, adjacency_scene(), store.frames()));
  p.weights = weights;
  return p;
}

}  // namespace fctest
