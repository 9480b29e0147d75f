#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "flowcount/dense.hpp"
#include "flowcount/error.hpp"
#include "flowcount/network.hpp"
#include "flowcount/problem.hpp"
#include "flowcount/union_find.hpp"

namespace flowcount {

/// Column layout of a KKT system: vertex flows, arc flows, then multipliers.
///
/// Full layout multipliers are lambda-in per group, lambda-out per group and mu.
/// Reduced layout multipliers are one unknown per multiplier class.
struct KktLayout {
  std::size_t groups = 0;
  std::size_t arcs = 0;
  std::size_t multipliers = 0;
  bool reduced = false;

  std::size_t vertex(std::size_t i) const { return i; }
  std::size_t arc(std::size_t j) const { return groups + j; }
  std::size_t multiplier(std::size_t k) const { return groups + arcs + k; }
  std::size_t lambda_in(std::size_t i) const { return multiplier(i); }
  std::size_t lambda_out(std::size_t i) const { return multiplier(groups + i); }
  std::size_t mu() const { return multiplier(2 * groups); }
  std::size_t unknowns() const { return groups + arcs + multipliers; }
};

struct KktSystem {
  DenseMatrix matrix;
  std::vector<double> rhs;
  KktLayout layout;

  /// Number of unknowns (the full system is square).
  std::size_t dimension() const { return matrix.cols(); }
};

/// Partition of A plus the virtual arc <S,T> into classes of the closure of
/// "shares a tail or shares a head". Arc index arc_count() stands for <S,T>.
struct MultiplierClasses {
  std::vector<std::vector<std::size_t>> classes;
  std::vector<std::size_t> class_of;
  std::size_t source_sink_arc = 0;

  std::size_t size() const { return classes.size(); }
  /// Class whose multiplier plays the role of mu.
  std::size_t mu_class() const { return class_of[source_sink_arc]; }
};

namespace detail {

inline void fill_conservation_rows(const FlowNetwork& net, const KktLayout& lay, DenseMatrix& a) {
  const std::size_t g = net.group_count();
  for (std::size_t i = 0; i < g; ++i) {
    a(i, lay.vertex(i)) = -1.0;
    for (std::size_t ai : net.in_arcs(Node::group(i))) a(i, lay.arc(ai)) = 1.0;
    a(g + i, lay.vertex(i)) = -1.0;
    for (std::size_t ai : net.out_arcs(Node::group(i))) a(g + i, lay.arc(ai)) = 1.0;
  }
  for (std::size_t ai : net.out_arcs(Node::source())) a(2 * g, lay.arc(ai)) += 1.0;
  for (std::size_t ai : net.in_arcs(Node::sink())) a(2 * g, lay.arc(ai)) -= 1.0;
}

inline double weighted_sq_objective(const FlowProblem& p, std::span<const double> f) {
  double obj = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) obj += p.weights[i] * (f[i] - p.targets[i]) * (f[i] - p.targets[i]);
  return obj;
}

}  // namespace detail

/// Full KKT system of the relaxed QP; dimension 3|V| + |A| - 5.
inline KktSystem assemble_kkt(const QpProblem& p) {
  p.validate();
  const auto& net = p.network;
  const std::size_t g = net.group_count();
  const std::size_t m = net.arc_count();
  if (g == 0) return {};

  KktLayout lay{g, m, 2 * g + 1, false};
  const std::size_t n = lay.unknowns();
  KktSystem sys{DenseMatrix(n, n), std::vector<double>(n, 0.0), lay};
  auto& a = sys.matrix;
  detail::fill_conservation_rows(net, lay, a);

  const std::size_t arc_row0 = 2 * g + 1;
  for (std::size_t j = 0; j < m; ++j) {
    const Arc& arc = net.arc(j);
    const std::size_t r = arc_row0 + j;
    if (arc.tail.is_source()) {
      a(r, lay.mu()) = -1.0;
    } else {
      a(r, lay.lambda_out(arc.tail.index)) = 1.0;
    }
    if (arc.head.is_sink()) {
      a(r, lay.mu()) = 1.0;
    } else {
      a(r, lay.lambda_in(arc.head.index)) = 1.0;
    }
  }

  const std::size_t stat_row0 = arc_row0 + m;
  for (std::size_t i = 0; i < g; ++i) {
    const std::size_t r = stat_row0 + i;
    a(r, lay.vertex(i)) = 2.0 * p.weights[i];
    a(r, lay.lambda_in(i)) = 1.0;
    a(r, lay.lambda_out(i)) = 1.0;
    sys.rhs[r] = 2.0 * p.weights[i] * p.targets[i];
  }
  return sys;
}

/// Equivalence classes of multipliers; the class holding <S,T> is numbered 0,
/// the rest in order of their smallest arc index.
inline MultiplierClasses reduce_multipliers(const FlowNetwork& net) {
  const std::size_t m = net.arc_count();
  UnionFind uf(m + 1);
  for (std::size_t i = 0; i < net.group_count(); ++i) {
    const auto in = net.in_arcs(Node::group(i));
    for (std::size_t k = 1; k < in.size(); ++k) uf.unite(in[0], in[k]);
    const auto out = net.out_arcs(Node::group(i));
    for (std::size_t k = 1; k < out.size(); ++k) uf.unite(out[0], out[k]);
  }
  for (std::size_t ai : net.out_arcs(Node::source())) uf.unite(m, ai);
  for (std::size_t ai : net.in_arcs(Node::sink())) uf.unite(m, ai);

  MultiplierClasses mc;
  mc.source_sink_arc = m;
  mc.class_of.assign(m + 1, UnionFind::npos);
  std::vector<std::size_t> root_class(m + 1, UnionFind::npos);
  auto assign = [&](std::size_t arc) {
    const std::size_t r = uf.find(arc);
    if (root_class[r] == UnionFind::npos) {
      root_class[r] = mc.classes.size();
      mc.classes.emplace_back();
    }
    mc.class_of[arc] = root_class[r];
    mc.classes[root_class[r]].push_back(arc);
  };
  assign(m);
  for (std::size_t j = 0; j < m; ++j) assign(j);
  return mc;
}

inline MultiplierClasses reduce_multipliers(const SubNetwork& sub) { return reduce_multipliers(sub.network); }

/// KKT system with one multiplier per class; arc stationarity rows drop out.
inline KktSystem assemble_reduced_kkt(const QpProblem& p, const MultiplierClasses& mc) {
  p.validate();
  const auto& net = p.network;
  const std::size_t g = net.group_count();
  const std::size_t m = net.arc_count();
  if (g == 0) return {};

  KktLayout lay{g, m, mc.size(), true};
  const std::size_t rows = 3 * g + 1;
  KktSystem sys{DenseMatrix(rows, lay.unknowns()), std::vector<double>(rows, 0.0), lay};
  auto& a = sys.matrix;
  detail::fill_conservation_rows(net, lay, a);

  for (std::size_t i = 0; i < g; ++i) {
    const auto in = net.in_arcs(Node::group(i));
    const auto out = net.out_arcs(Node::group(i));
    if (in.empty() || out.empty()) throw SolverError("group without in- or out-arc in " + detail::describe(net));
    const std::size_t r = 2 * g + 1 + i;
    a(r, lay.vertex(i)) = 2.0 * p.weights[i];
    a(r, lay.multiplier(mc.class_of[in[0]])) += 1.0;
    a(r, lay.multiplier(mc.class_of[out[0]])) -= 1.0;
    sys.rhs[r] = 2.0 * p.weights[i] * p.targets[i];
  }
  return sys;
}

/// Weighted mean: the common flow value on a path sub-network.
inline double solve_path_closed_form(std::span<const double> targets, std::span<const double> weights) {
  if (targets.empty() || targets.size() != weights.size()) throw InputError("path closed form needs matched, nonempty inputs");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    num += weights[i] * targets[i];
    den += weights[i];
  }
  return num / den;
}

/// Unique minimiser of sum w (f - f^)^2 under the network flow constraints.
///
/// Vertex flows are unique; arc flows are a basic solution when the undirected support has cycles.
inline FlowSolution solve_qp(const QpProblem& p, bool use_reduction = true) {
  p.validate();
  const auto& net = p.network;
  const std::size_t g = net.group_count();
  const std::size_t m = net.arc_count();
  FlowSolution sol;
  if (g == 0) {
    sol.arc_flow.assign(m, 0.0);
    return sol;
  }

  if (auto arcs = exact_feasible_arc_flows(net, p.targets)) {
    sol.vertex_flow = p.targets;
    sol.arc_flow = std::move(*arcs);
    sol.multipliers = std::vector<double>(2 * g + 1, 0.0);
    return sol;
  }

  MultiplierClasses mc;
  if (use_reduction) mc = reduce_multipliers(net);
  KktSystem sys = use_reduction ? assemble_reduced_kkt(p, mc) : assemble_kkt(p);
  const auto res = gaussian_eliminate(std::move(sys.matrix), std::move(sys.rhs));
  if (!res.consistent) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", res.inconsistency);
    throw SolverError("singular KKT system (inconsistency " + std::string(buf) + ") in " + detail::describe(net));
  }

  const auto& lay = sys.layout;
  sol.vertex_flow.resize(g);
  sol.arc_flow.resize(m);
  for (std::size_t i = 0; i < g; ++i) sol.vertex_flow[i] = res.solution[lay.vertex(i)];
  for (std::size_t j = 0; j < m; ++j) sol.arc_flow[j] = res.solution[lay.arc(j)];

  std::vector<double> mult(2 * g + 1);
  if (use_reduction) {
    for (std::size_t i = 0; i < g; ++i) {
      mult[i] = res.solution[lay.multiplier(mc.class_of[net.in_arcs(Node::group(i))[0]])];
      mult[g + i] = -res.solution[lay.multiplier(mc.class_of[net.out_arcs(Node::group(i))[0]])];
    }
    mult[2 * g] = res.solution[lay.multiplier(mc.mu_class())];
  } else {
    for (std::size_t k = 0; k < mult.size(); ++k) mult[k] = res.solution[lay.multiplier(k)];
  }
  sol.multipliers = std::move(mult);
  sol.objective = detail::weighted_sq_objective(p, sol.vertex_flow);
  return sol;
}

/// Largest absolute residual of each KKT row group.
struct KktResidual {
  double conservation = 0.0;
  double balance = 0.0;
  double multiplier = 0.0;
  double stationarity = 0.0;
  bool multipliers_fitted = false;

  double max() const { return std::max({conservation, balance, multiplier, stationarity}); }
  bool passes(double tol = 1e-8) const { return max() <= tol; }

  std::string report() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "kkt conservation=%.3e balance=%.3e multiplier=%.3e stationarity=%.3e max=%.3e multipliers=%s "
                  "status=%s",
                  conservation, balance, multiplier, stationarity, max(), multipliers_fitted ? "fitted" : "given",
                  passes() ? "pass" : "fail");
    return buf;
  }
};

/// Evaluates every KKT row at `s`. Missing multipliers are recovered by least squares.
inline KktResidual verify_kkt(const QpProblem& p, const FlowSolution& s) {
  p.validate();
  const auto& net = p.network;
  const std::size_t g = net.group_count();
  const std::size_t m = net.arc_count();
  KktResidual out;
  if (g == 0) return out;
  if (s.vertex_flow.size() != g || s.arc_flow.size() != m) throw InputError("solution does not match the problem");

  auto arc_sum = [&](std::span<const std::size_t> arcs) {
    double v = 0.0;
    for (std::size_t a : arcs) v += s.arc_flow[a];
    return v;
  };
  for (std::size_t i = 0; i < g; ++i) {
    out.conservation = std::max(out.conservation, std::abs(arc_sum(net.in_arcs(Node::group(i))) - s.vertex_flow[i]));
    out.conservation = std::max(out.conservation, std::abs(arc_sum(net.out_arcs(Node::group(i))) - s.vertex_flow[i]));
  }
  out.balance = std::abs(arc_sum(net.out_arcs(Node::source())) - arc_sum(net.in_arcs(Node::sink())));

  // Multiplier-only rows: m arc rows, then g stationarity rows moved to lambda form.
  const std::size_t nm = 2 * g + 1;
  DenseMatrix dual(m + g, nm);
  std::vector<double> rhs(m + g, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const Arc& arc = net.arc(j);
    if (arc.tail.is_source()) dual(j, 2 * g) -= 1.0; else dual(j, g + arc.tail.index) += 1.0;
    if (arc.head.is_sink()) dual(j, 2 * g) += 1.0; else dual(j, arc.head.index) += 1.0;
  }
  for (std::size_t i = 0; i < g; ++i) {
    dual(m + i, i) = 1.0;
    dual(m + i, g + i) = 1.0;
    rhs[m + i] = -2.0 * p.weights[i] * (s.vertex_flow[i] - p.targets[i]);
  }

  std::vector<double> mult;
  if (s.multipliers && s.multipliers->size() == nm) {
    mult = *s.multipliers;
  } else {
    const DenseMatrix dt = dual.transpose();
    DenseMatrix normal(nm, nm);
    for (std::size_t r = 0; r < nm; ++r)
      for (std::size_t c = 0; c < nm; ++c) {
        double v = 0.0;
        for (std::size_t k = 0; k < m + g; ++k) v += dt(r, k) * dt(c, k);
        normal(r, c) = v;
      }
    mult = gaussian_eliminate(std::move(normal), dt.multiply(rhs)).solution;
    out.multipliers_fitted = true;
  }

  const auto lhs = dual.multiply(mult);
  for (std::size_t j = 0; j < m; ++j) out.multiplier = std::max(out.multiplier, std::abs(lhs[j] - rhs[j]));
  for (std::size_t i = 0; i < g; ++i) {
    out.stationarity = std::max(out.stationarity, std::abs(lhs[m + i] - rhs[m + i]));
  }
  return out;
}

}  // namespace flowcount
