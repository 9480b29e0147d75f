#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "flowcount/calibration.hpp"
#include "flowcount/error.hpp"
#include "flowcount/lp.hpp"
#include "flowcount/network.hpp"
#include "flowcount/observation.hpp"
#include "flowcount/problem.hpp"
#include "flowcount/qp.hpp"

namespace flowcount {

enum class Method { qp, lp, none };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::qp: return "qp";
    case Method::lp: return "lp";
    case Method::none: return "none";
  }
  return "none";
}

inline Method parse_method(const std::string& s) {
  if (s == "qp") return Method::qp;
  if (s == "lp") return Method::lp;
  if (s == "none") return Method::none;
  throw InputError("unknown method '" + s + "'");
}

struct RunConfig {
  Method method = Method::qp;
  /// Window half-width l; the window spans 2l+1 frames.
  std::int64_t half_width = 1;
  SceneConfig scene;
  /// Round reported per-frame totals to the nearest integer.
  bool rounding = false;
  std::optional<CalibrationTable> calibration;
  bool use_reduction = true;
  /// Solve path sub-networks in closed form (weighted mean for QP, weighted median for LP).
  bool path_shortcut = true;
  std::size_t workers = 1;
  /// Frames to report; defaults to the observed range.
  std::optional<FrameRange> frames;

  /// Name in the style of the result tables: "original", "QPL23", "LPL3".
  std::string label() const {
    if (method == Method::none) return "original";
    return std::string(method == Method::qp ? "QPL" : "LPL") + std::to_string(2 * half_width + 1);
  }

  void validate() const {
    scene.validate();
    if (method != Method::none && half_width < 1) throw InputError("window half-width must be >= 1");
    if (workers < 1) throw InputError("worker count must be >= 1");
  }
};

struct GroupEstimate {
  GroupKey key;
  double predicted = 0.0;
  double weight = 1.0;
  double smoothed = 0.0;
};

struct FrameCount {
  FrameId frame = 0;
  double raw_total = 0.0;
  double smoothed_total = 0.0;
  std::size_t n_groups = 0;
  /// Sub-networks of the frame's window (0 for the raw method).
  std::size_t n_components = 0;
  std::vector<GroupEstimate> groups;
};

struct FrameCountSeries {
  std::string label;
  std::vector<FrameCount> frames;
};

/// Solves one sub-network with the configured model.
inline FlowSolution solve_component(const FlowProblem& p, Method method, bool use_reduction, bool path_shortcut) {
  if (path_shortcut) {
    if (auto chain = is_path(p.network)) {
      std::vector<double> t;
      std::vector<double> w;
      for (std::size_t i : *chain) {
        t.push_back(p.targets[i]);
        w.push_back(p.weights[i]);
      }
      const double f = method == Method::qp ? solve_path_closed_form(t, w) : weighted_median(t, w);
      FlowSolution s;
      s.vertex_flow.assign(p.network.group_count(), f);
      s.arc_flow.assign(p.network.arc_count(), f);
      s.objective = method == Method::qp ? detail::weighted_sq_objective(p, s.vertex_flow)
                                         : detail::weighted_abs_objective(p, s.vertex_flow);
      return s;
    }
  }
  return method == Method::qp ? solve_qp(p, use_reduction) : solve_lp(p);
}

/// Replaces predictions and weights by their calibrated values.
inline std::vector<GroupObservation> calibrate_observations(std::span<const GroupObservation> obs,
                                                            const CalibrationTable& table) {
  std::vector<GroupObservation> out(obs.begin(), obs.end());
  for (auto& o : out) {
    const auto c = apply_calibration(o.predicted_count, table);
    o.predicted_count = std::max(0.0, c.corrected);
    o.weight = c.weight;
  }
  return out;
}

/// Smoothed count of frame `j` from the window centred on it.
inline FrameCount run_frame(const ObservationStore& store, const RunConfig& cfg, FrameId j, FrameRange sequence) {
  FrameCount fc;
  fc.frame = j;
  for (const auto& o : store.in_frame(j)) {
    fc.groups.push_back({o.key, o.predicted_count, o.weight, o.predicted_count});
    fc.raw_total += o.predicted_count;
  }
  fc.n_groups = fc.groups.size();
  if (cfg.method == Method::none) {
    fc.smoothed_total = cfg.rounding ? std::round(fc.raw_total) : fc.raw_total;
    return fc;
  }

  const auto subs = decompose(window_network(store, cfg.scene, j, cfg.half_width, sequence));
  fc.n_components = subs.size();
  for (std::size_t c = 0; c < subs.size(); ++c) {
    const auto& groups = subs[c].network.groups();
    const bool touches_frame =
        std::any_of(groups.begin(), groups.end(), [j](const GroupObservation& g) { return g.key.frame == j; });
    if (!touches_frame) continue;
    FlowSolution sol;
    try {
      sol = solve_component(FlowProblem::from_sub(subs[c]), cfg.method, cfg.use_reduction, cfg.path_shortcut);
    } catch (const SolverError& e) {
      throw SolverError("frame " + std::to_string(j) + ", component " + std::to_string(c) + ": " + e.what());
    }
    for (std::size_t k = 0; k < groups.size(); ++k) {
      if (groups[k].key.frame != j) continue;
      auto it = std::find_if(fc.groups.begin(), fc.groups.end(),
                             [&](const GroupEstimate& e) { return e.key == groups[k].key; });
      it->smoothed = sol.vertex_flow[k];
    }
  }
  for (const auto& g : fc.groups) fc.smoothed_total += g.smoothed;
  if (cfg.rounding) fc.smoothed_total = std::round(fc.smoothed_total);
  return fc;
}

/// Work-pool size from FLOWCOUNT_WORKERS, defaulting to 1.
inline std::size_t workers_from_env() {
  if (const char* v = std::getenv("FLOWCOUNT_WORKERS")) {
    const long n = std::strtol(v, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  return 1;
}

/// Slides the window over every frame and reports raw and smoothed totals.
inline FrameCountSeries run(std::span<const GroupObservation> observations, const RunConfig& cfg) {
  cfg.validate();
  const ObservationStore store(cfg.calibration ? calibrate_observations(observations, *cfg.calibration)
                                               : std::vector<GroupObservation>(observations.begin(), observations.end()));
  const FrameRange sequence = cfg.frames ? *cfg.frames : store.frames();

  FrameCountSeries series;
  series.label = cfg.label();
  const std::size_t n = sequence.size();
  series.frames.resize(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> cursor{0};
  auto work = [&] {
    for (std::size_t k = cursor++; k < n; k = cursor++) {
      try {
        series.frames[k] = run_frame(store, cfg, sequence.first + static_cast<FrameId>(k), sequence);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(cfg.workers, std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return series;
}

/// Mean absolute and mean relative per-frame counting errors.
struct ErrorReport {
  double mae = 0.0;
  double mre = 0.0;
  std::size_t frames = 0;
  /// Frames contributing to MRE (true count > 0).
  std::size_t mre_frames = 0;
  std::vector<FrameId> excluded_frames;
};

/// `guessed[i]` and `truth[i]` belong to the same frame; `frame_ids` names them for exclusions.
inline ErrorReport evaluate(std::span<const double> guessed, std::span<const double> truth,
                            std::span<const FrameId> frame_ids = {}) {
  if (guessed.size() != truth.size()) throw InputError("guessed and true series differ in length");
  ErrorReport r;
  r.frames = guessed.size();
  double abs_sum = 0.0;
  double rel_sum = 0.0;
  for (std::size_t i = 0; i < guessed.size(); ++i) {
    const double err = std::abs(guessed[i] - truth[i]);
    abs_sum += err;
    if (truth[i] > 0.0) {
      rel_sum += err / truth[i];
      ++r.mre_frames;
    } else {
      r.excluded_frames.push_back(i < frame_ids.size() ? frame_ids[i] : static_cast<FrameId>(i));
    }
  }
  if (r.frames > 0) r.mae = abs_sum / static_cast<double>(r.frames);
  if (r.mre_frames > 0) r.mre = rel_sum / static_cast<double>(r.mre_frames);
  return r;
}

/// Requires the truth to cover exactly the series' frames.
inline ErrorReport evaluate(const FrameCountSeries& series, const std::map<FrameId, double>& truth) {
  if (truth.size() != series.frames.size()) throw InputError("series and ground truth cover different frames");
  std::vector<double> g;
  std::vector<double> t;
  std::vector<FrameId> ids;
  for (const auto& f : series.frames) {
    auto it = truth.find(f.frame);
    if (it == truth.end()) throw InputError("no ground truth for frame " + std::to_string(f.frame));
    g.push_back(f.smoothed_total);
    t.push_back(it->second);
    ids.push_back(f.frame);
  }
  return evaluate(g, t, ids);
}

}  // namespace flowcount
