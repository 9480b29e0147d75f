#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowcount/error.hpp"
#include "flowcount/network.hpp"

namespace flowcount {

/// Lower bound applied to reliability weights so the objective stays strictly convex.
inline constexpr double kWeightFloor = 1e-6;

/// Targets f^(P) and weights w(f^(P)) attached to the group vertices of a network.
struct FlowProblem {
  FlowNetwork network;
  std::vector<double> targets;
  std::vector<double> weights;

  /// Targets and (floored) weights taken from the network's own observations.
  static FlowProblem from_network(FlowNetwork net) {
    FlowProblem p;
    p.targets.reserve(net.group_count());
    p.weights.reserve(net.group_count());
    for (const auto& g : net.groups()) {
      p.targets.push_back(g.predicted_count);
      p.weights.push_back(std::max(g.weight, kWeightFloor));
    }
    p.network = std::move(net);
    return p;
  }

  static FlowProblem from_sub(const SubNetwork& sub) { return from_network(sub.network); }

  void validate() const {
    const std::size_t g = network.group_count();
    if (targets.size() != g || weights.size() != g) throw InputError("problem needs one target and weight per group");
    for (double w : weights) {
      if (!(w > 0.0) || !std::isfinite(w)) throw InputError("problem weights must be positive and finite");
    }
    for (double t : targets) {
      if (!std::isfinite(t)) throw InputError("problem targets must be finite");
    }
  }
};

namespace detail {

inline std::string describe(const FlowNetwork& net) {
  std::string s = "sub-network with " + std::to_string(net.group_count()) + " groups and " +
                  std::to_string(net.arc_count()) + " arcs";
  if (net.group_count() > 0) s += " starting at " + to_string(net.group(0).key);
  return s;
}

}  // namespace detail

using QpProblem = FlowProblem;
using LpProblem = FlowProblem;

/// Real-valued (S,T)-flow: one value per group vertex and per arc.
struct FlowSolution {
  std::vector<double> vertex_flow;
  std::vector<double> arc_flow;
  double objective = 0.0;
  /// KKT multipliers in full layout (lambda-in per group, lambda-out per group, mu), when known.
  std::optional<std::vector<double>> multipliers;
};

/// Largest conservation violation over all group vertices and the S/T balance, each scaled by 1 + magnitude.
inline double conservation_residual(const FlowNetwork& net, const FlowSolution& s) {
  double worst = 0.0;
  auto sum_over = [&](std::span<const std::size_t> arcs) {
    double v = 0.0;
    for (std::size_t a : arcs) v += s.arc_flow[a];
    return v;
  };
  for (std::size_t i = 0; i < net.group_count(); ++i) {
    const double f = s.vertex_flow[i];
    const double in = sum_over(net.in_arcs(Node::group(i)));
    const double out = sum_over(net.out_arcs(Node::group(i)));
    worst = std::max(worst, std::abs(in - f) / (1.0 + std::abs(f)));
    worst = std::max(worst, std::abs(out - f) / (1.0 + std::abs(f)));
  }
  const double src = sum_over(net.out_arcs(Node::source()));
  const double snk = sum_over(net.in_arcs(Node::sink()));
  worst = std::max(worst, std::abs(src - snk) / (1.0 + std::abs(src)));
  return worst;
}

/// Arc flows realising `vertex_flow` exactly, or nullopt when the vertex values violate conservation.
///
/// Works on the port graph where each arc joins the out-port of its tail to the in-port of its head
/// (S out-port and T in-port are merged into one balanced node). Components of that graph are the
/// multiplier classes; a spanning forest carries the flow and the root residual decides feasibility.
/// The feasibility decision is exact for integer-valued inputs.
inline std::optional<std::vector<double>> exact_feasible_arc_flows(const FlowNetwork& net,
                                                                   std::span<const double> vertex_flow) {
  const std::size_t g = net.group_count();
  const std::size_t nodes = 2 * g + 1;
  const std::size_t z = 2 * g;
  auto out_port = [&](Node n) { return n.is_source() ? z : n.index; };
  auto in_port = [&](Node n) { return n.is_sink() ? z : g + n.index; };

  // Net outflow each port must produce.
  std::vector<double> supply(nodes, 0.0);
  for (std::size_t i = 0; i < g; ++i) {
    supply[i] = vertex_flow[i];
    supply[g + i] = -vertex_flow[i];
  }
  std::vector<std::vector<std::size_t>> incident(nodes);
  for (std::size_t a = 0; a < net.arc_count(); ++a) {
    incident[out_port(net.arc(a).tail)].push_back(a);
    incident[in_port(net.arc(a).head)].push_back(a);
  }

  std::vector<double> flow(net.arc_count(), 0.0);
  std::vector<bool> seen(nodes, false);
  std::vector<std::size_t> parent_arc(nodes, static_cast<std::size_t>(-1));
  for (std::size_t root = 0; root < nodes; ++root) {
    if (seen[root]) continue;
    std::vector<std::size_t> order{root};
    seen[root] = true;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const std::size_t u = order[k];
      for (std::size_t a : incident[u]) {
        const std::size_t t = out_port(net.arc(a).tail);
        const std::size_t h = in_port(net.arc(a).head);
        const std::size_t v = (t == u) ? h : t;
        if (seen[v]) continue;
        seen[v] = true;
        parent_arc[v] = a;
        order.push_back(v);
      }
    }
    auto& remaining = supply;
    for (std::size_t k = order.size(); k-- > 1;) {
      const std::size_t u = order[k];
      const std::size_t a = parent_arc[u];
      // Arc a leaves its tail port and enters its head port.
      const bool u_is_tail = out_port(net.arc(a).tail) == u;
      const double f = u_is_tail ? remaining[u] : -remaining[u];
      flow[a] = f;
      const std::size_t parent = u_is_tail ? in_port(net.arc(a).head) : out_port(net.arc(a).tail);
      remaining[parent] += u_is_tail ? f : -f;
      remaining[u] = 0.0;
    }
    if (remaining[root] != 0.0) return std::nullopt;
  }
  return flow;
}

}  // namespace flowcount
