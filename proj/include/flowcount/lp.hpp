#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "flowcount/error.hpp"
#include "flowcount/network.hpp"
#include "flowcount/problem.hpp"
#include "flowcount/simplex.hpp"

namespace flowcount {

/// Column layout of the standard-form L1 model.
///
/// Free flows are split as f = f+ - f-. Columns run: vertex flows (by group order),
/// arc flows (by arc order), h per group, then two slacks per group.
struct LpLayout {
  std::size_t groups = 0;
  std::size_t arcs = 0;

  std::size_t flow_pos(std::size_t i) const { return 2 * i; }
  std::size_t flow_neg(std::size_t i) const { return 2 * i + 1; }
  std::size_t arc_pos(std::size_t j) const { return 2 * groups + 2 * j; }
  std::size_t arc_neg(std::size_t j) const { return 2 * groups + 2 * j + 1; }
  std::size_t deviation(std::size_t i) const { return 2 * groups + 2 * arcs + i; }
  std::size_t slack_upper(std::size_t i) const { return 3 * groups + 2 * arcs + 2 * i; }
  std::size_t slack_lower(std::size_t i) const { return 3 * groups + 2 * arcs + 2 * i + 1; }
  std::size_t columns() const { return 5 * groups + 2 * arcs; }
  std::size_t rows() const { return 4 * groups + 1; }
};

struct LpTableau {
  StandardFormLp lp;
  LpLayout layout;
};

struct LpSolveStats {
  std::size_t iterations = 0;
};

/// min sum w h  s.t.  f - h <= f^,  -f - h <= -f^,  and the network flow constraints.
inline LpTableau assemble_lp(const LpProblem& p) {
  p.validate();
  const auto& net = p.network;
  const std::size_t g = net.group_count();
  const std::size_t m = net.arc_count();
  LpLayout lay{g, m};
  LpTableau t{{DenseMatrix(lay.rows(), lay.columns()), std::vector<double>(lay.rows(), 0.0),
               std::vector<double>(lay.columns(), 0.0)},
              lay};
  auto& a = t.lp.a;

  auto put_flow = [&](std::size_t row, std::size_t i, double coef) {
    a(row, lay.flow_pos(i)) += coef;
    a(row, lay.flow_neg(i)) -= coef;
  };
  auto put_arc = [&](std::size_t row, std::size_t j, double coef) {
    a(row, lay.arc_pos(j)) += coef;
    a(row, lay.arc_neg(j)) -= coef;
  };

  for (std::size_t i = 0; i < g; ++i) {
    put_flow(i, i, 1.0);
    a(i, lay.deviation(i)) = -1.0;
    a(i, lay.slack_upper(i)) = 1.0;
    t.lp.b[i] = p.targets[i];

    put_flow(g + i, i, -1.0);
    a(g + i, lay.deviation(i)) = -1.0;
    a(g + i, lay.slack_lower(i)) = 1.0;
    t.lp.b[g + i] = -p.targets[i];

    put_flow(2 * g + i, i, -1.0);
    for (std::size_t j : net.in_arcs(Node::group(i))) put_arc(2 * g + i, j, 1.0);
    put_flow(3 * g + i, i, -1.0);
    for (std::size_t j : net.out_arcs(Node::group(i))) put_arc(3 * g + i, j, 1.0);

    t.lp.c[lay.deviation(i)] = p.weights[i];
  }
  for (std::size_t j : net.out_arcs(Node::source())) put_arc(4 * g, j, 1.0);
  for (std::size_t j : net.in_arcs(Node::sink())) put_arc(4 * g, j, -1.0);
  return t;
}

namespace detail {

inline double weighted_abs_objective(const FlowProblem& p, std::span<const double> f) {
  double obj = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) obj += p.weights[i] * std::abs(f[i] - p.targets[i]);
  return obj;
}

}  // namespace detail

/// L1-optimal flow by simplex. Optima may form a face; the reported point is the one
/// Bland's rule reaches under the column order of LpLayout.
inline FlowSolution solve_lp(const LpProblem& p, LpSolveStats& stats) {
  p.validate();
  const auto& net = p.network;
  const std::size_t g = net.group_count();
  FlowSolution sol;
  stats = {};
  if (g == 0) {
    sol.arc_flow.assign(net.arc_count(), 0.0);
    return sol;
  }
  if (auto arcs = exact_feasible_arc_flows(net, p.targets)) {
    sol.vertex_flow = p.targets;
    sol.arc_flow = std::move(*arcs);
    return sol;
  }

  const LpTableau t = assemble_lp(p);
  const SimplexResult r = solve_simplex(t.lp);
  stats.iterations = r.iterations;
  if (r.status != SimplexStatus::optimal) {
    const char* what = r.status == SimplexStatus::infeasible  ? "infeasible"
                       : r.status == SimplexStatus::unbounded ? "unbounded"
                                                              : "iteration limit reached";
    throw SolverError(std::string("LP ") + what + " in " + detail::describe(net));
  }
  const auto& lay = t.layout;
  sol.vertex_flow.resize(g);
  sol.arc_flow.resize(net.arc_count());
  for (std::size_t i = 0; i < g; ++i) sol.vertex_flow[i] = r.x[lay.flow_pos(i)] - r.x[lay.flow_neg(i)];
  for (std::size_t j = 0; j < net.arc_count(); ++j) sol.arc_flow[j] = r.x[lay.arc_pos(j)] - r.x[lay.arc_neg(j)];
  sol.objective = detail::weighted_abs_objective(p, sol.vertex_flow);
  return sol;
}

inline FlowSolution solve_lp(const LpProblem& p) {
  LpSolveStats stats;
  return solve_lp(p, stats);
}

/// Lower weighted median: the smallest target whose cumulative weight reaches half the total.
/// This is the L1-optimal common value on a path sub-network.
inline double weighted_median(std::span<const double> targets, std::span<const double> weights) {
  if (targets.empty() || targets.size() != weights.size()) throw InputError("weighted median needs matched, nonempty inputs");
  std::vector<std::size_t> order(targets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return targets[a] < targets[b]; });
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double cum = 0.0;
  for (std::size_t k : order) {
    cum += weights[k];
    if (2.0 * cum >= total) return targets[k];
  }
  return targets[order.back()];
}

}  // namespace flowcount
