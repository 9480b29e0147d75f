#pragma once

#include <fstream>
#include <iterator>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowcount/calibration.hpp"
#include "flowcount/error.hpp"
#include "flowcount/format.hpp"
#include "flowcount/observation.hpp"
#include "flowcount/pipeline.hpp"
#include "flowcount/region.hpp"
#include "flowcount/synth.hpp"

namespace flowcount {

using json = nlohmann::json;

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path + "'");
}

namespace detail {

template <typename T>
T get_field(const json& j, const char* key) {
  if (!j.contains(key)) throw InputError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
T get_field_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? get_field<T>(j, key) : fallback;
}

inline Box box_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 4) throw InputError(std::string(what) + " must be [x_min, y_min, x_max, y_max]");
  try {
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  } catch (const json::exception&) {
    throw InputError(std::string(what) + " must hold four numbers");
  }
}

inline json box_to_json(const Box& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

inline void reject_unknown_keys(const json& j, const std::set<std::string>& known, const std::string& what) {
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw InputError(what + ": unknown field '" + k + "'");
  }
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(what + ": " + e.what());
  }
}

}  // namespace detail

inline json observation_to_json(const GroupObservation& o) {
  json j;
  j["frame"] = o.key.frame;
  j["group_id"] = o.key.group_id;
  if (o.region) {
    j["x_min"] = o.region->box.x_min;
    j["y_min"] = o.region->box.y_min;
    j["x_max"] = o.region->box.x_max;
    j["y_max"] = o.region->box.y_max;
    if (o.region->mask) {
      json runs = json::array();
      for (const auto& r : o.region->mask->runs()) runs.push_back({r.row, r.col_begin, r.col_end});
      j["mask"] = runs;
    }
  }
  j["predicted_count"] = o.predicted_count;
  j["weight"] = o.weight;
  j["prev_adjacency"] = o.prev_adjacency;
  j["touches_S"] = o.touches_source;
  j["touches_T"] = o.touches_sink;
  return j;
}

inline GroupObservation observation_from_json(const json& j) {
  if (!j.is_object()) throw InputError("observation must be a JSON object");
  detail::reject_unknown_keys(j,
                              {"frame", "group_id", "x_min", "y_min", "x_max", "y_max", "predicted_count", "weight",
                               "mask", "prev_adjacency", "touches_S", "touches_T"},
                              "observation");
  GroupObservation o;
  o.key.frame = detail::get_field<FrameId>(j, "frame");
  o.key.group_id = detail::get_field<GroupId>(j, "group_id");
  o.predicted_count = detail::get_field<double>(j, "predicted_count");
  o.weight = detail::get_field_or<double>(j, "weight", 1.0);

  const int box_keys = static_cast<int>(j.contains("x_min")) + j.contains("y_min") + j.contains("x_max") +
                       j.contains("y_max");
  if (box_keys != 0 && box_keys != 4) throw InputError("observation box needs all of x_min, y_min, x_max, y_max");
  std::optional<Box> box;
  if (box_keys == 4) {
    box = Box{detail::get_field<double>(j, "x_min"), detail::get_field<double>(j, "y_min"),
              detail::get_field<double>(j, "x_max"), detail::get_field<double>(j, "y_max")};
  }
  if (j.contains("mask")) {
    std::vector<MaskRun> runs;
    try {
      for (const auto& r : j.at("mask")) {
        if (!r.is_array() || r.size() != 3) throw InputError("mask runs must be [row, col_begin, col_end]");
        runs.push_back({r[0].get<std::int64_t>(), r[1].get<std::int64_t>(), r[2].get<std::int64_t>()});
      }
    } catch (const json::exception&) {
      throw InputError("mask runs must hold integers");
    }
    o.region = Region::from_mask(Mask(std::move(runs)), box);
  } else if (box) {
    o.region = Region::from_box(*box);
  }
  o.prev_adjacency = detail::get_field_or<std::vector<GroupId>>(j, "prev_adjacency", {});
  o.touches_source = detail::get_field_or<bool>(j, "touches_S", false);
  o.touches_sink = detail::get_field_or<bool>(j, "touches_T", false);
  return o;
}

inline void write_observations(std::ostream& os, std::span<const GroupObservation> obs) {
  for (const auto& o : obs) os << observation_to_json(o).dump() << '\n';
}

inline std::vector<GroupObservation> read_observations(std::istream& is) {
  std::vector<GroupObservation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(observation_from_json(detail::parse_json(line, "invalid JSON")));
    } catch (const InputError& e) {
      throw InputError("observations line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<GroupObservation> read_observations_file(const std::string& path) {
  std::istringstream is(read_text_file(path));
  try {
    return read_observations(is);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline json scene_to_json(const SceneConfig& s) {
  return {{"S", detail::box_to_json(s.entry)}, {"T", detail::box_to_json(s.exit)},
          {"overlap_rule", to_string(s.overlap_rule)}};
}

/// Reads S, T and overlap_rule; other keys are ignored so a scenario spec also serves as a scene.
inline SceneConfig scene_from_json(const json& j) {
  if (!j.is_object()) throw InputError("scene must be a JSON object");
  if (!j.contains("S") || !j.contains("T")) throw InputError("scene needs S and T boxes");
  SceneConfig s;
  s.entry = detail::box_from_json(j.at("S"), "S");
  s.exit = detail::box_from_json(j.at("T"), "T");
  s.overlap_rule = parse_overlap_rule(detail::get_field_or<std::string>(j, "overlap_rule", "region-intersection"));
  s.validate();
  return s;
}

inline SceneConfig read_scene_file(const std::string& path) {
  try {
    return scene_from_json(detail::parse_json(read_text_file(path), "invalid JSON"));
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline json scenario_to_json(const ScenarioSpec& s) {
  json j = scene_to_json(s.scene);
  j["first_frame"] = s.first_frame;
  j["n_frames"] = s.n_frames;
  j["arrival_rate"] = s.arrival_rate;
  j["speed"] = s.speed;
  j["speed_jitter"] = s.speed_jitter;
  j["body_width"] = s.body_width;
  j["body_height"] = s.body_height;
  j["grouping_radius"] = s.grouping_radius;
  j["noise"] = {{"kind", to_string(s.noise.kind)},
                {"scale", s.noise.scale},
                {"outlier_rate", s.noise.outlier_rate},
                {"outlier_scale", s.noise.outlier_scale}};
  j["segmentation_failure_rate"] = s.segmentation_failure_rate;
  j["seed"] = s.seed;
  json peds = json::array();
  for (const auto& p : s.pedestrians) {
    json q = {{"appear", p.appear}, {"x", p.x}, {"y", p.y}, {"vx", p.vx}, {"vy", p.vy}, {"persistent", p.persistent}};
    if (p.turn_at) {
      q["turn_at"] = *p.turn_at;
      q["turn_vx"] = p.turn_vx;
      q["turn_vy"] = p.turn_vy;
    }
    peds.push_back(q);
  }
  j["pedestrians"] = peds;
  return j;
}

inline ScenarioSpec scenario_from_json(const json& j) {
  if (!j.is_object()) throw InputError("scenario spec must be a JSON object");
  detail::reject_unknown_keys(j,
                              {"S", "T", "overlap_rule", "first_frame", "n_frames", "arrival_rate", "speed",
                               "speed_jitter", "body_width", "body_height", "grouping_radius", "noise",
                               "segmentation_failure_rate", "seed", "pedestrians"},
                              "scenario spec");
  ScenarioSpec s;
  s.scene = scene_from_json(j);
  s.first_frame = detail::get_field_or<FrameId>(j, "first_frame", s.first_frame);
  s.n_frames = detail::get_field<std::int64_t>(j, "n_frames");
  s.arrival_rate = detail::get_field_or<double>(j, "arrival_rate", s.arrival_rate);
  s.speed = detail::get_field_or<double>(j, "speed", s.speed);
  s.speed_jitter = detail::get_field_or<double>(j, "speed_jitter", s.speed_jitter);
  s.body_width = detail::get_field_or<double>(j, "body_width", s.body_width);
  s.body_height = detail::get_field_or<double>(j, "body_height", s.body_height);
  s.grouping_radius = detail::get_field_or<double>(j, "grouping_radius", s.grouping_radius);
  s.segmentation_failure_rate = detail::get_field_or<double>(j, "segmentation_failure_rate", 0.0);
  s.seed = detail::get_field_or<std::uint64_t>(j, "seed", s.seed);
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    if (!n.is_object()) throw InputError("noise must be a JSON object");
    detail::reject_unknown_keys(n, {"kind", "scale", "outlier_rate", "outlier_scale"}, "noise");
    s.noise.kind = parse_noise_kind(detail::get_field<std::string>(n, "kind"));
    s.noise.scale = detail::get_field_or<double>(n, "scale", s.noise.scale);
    s.noise.outlier_rate = detail::get_field_or<double>(n, "outlier_rate", 0.0);
    s.noise.outlier_scale = detail::get_field_or<double>(n, "outlier_scale", 0.0);
  }
  if (j.contains("pedestrians")) {
    if (!j.at("pedestrians").is_array()) throw InputError("pedestrians must be an array");
    for (const auto& q : j.at("pedestrians")) {
      if (!q.is_object()) throw InputError("pedestrian must be a JSON object");
      detail::reject_unknown_keys(q, {"appear", "x", "y", "vx", "vy", "persistent", "turn_at", "turn_vx", "turn_vy"},
                                  "pedestrian");
      PedestrianSeed p;
      p.appear = detail::get_field_or<FrameId>(q, "appear", s.first_frame);
      p.x = detail::get_field<double>(q, "x");
      p.y = detail::get_field<double>(q, "y");
      p.vx = detail::get_field_or<double>(q, "vx", 0.0);
      p.vy = detail::get_field_or<double>(q, "vy", 0.0);
      p.persistent = detail::get_field_or<bool>(q, "persistent", false);
      if (q.contains("turn_at")) {
        p.turn_at = detail::get_field<FrameId>(q, "turn_at");
        p.turn_vx = detail::get_field_or<double>(q, "turn_vx", 0.0);
        p.turn_vy = detail::get_field_or<double>(q, "turn_vy", 0.0);
      }
      s.pedestrians.push_back(p);
    }
  }
  s.validate();
  return s;
}

inline ScenarioSpec read_scenario_file(const std::string& path) {
  try {
    return scenario_from_json(detail::parse_json(read_text_file(path), "invalid JSON"));
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

namespace detail {

/// Rows of a comma-separated file with the expected header; '#' lines are skipped.
inline std::vector<std::vector<std::string>> read_csv(std::istream& is, const std::vector<std::string>& header,
                                                      std::vector<std::string>* comments = nullptr) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool seen_header = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (comments) comments->push_back(line);
      continue;
    }
    std::vector<std::string> fields;
    for (auto f : split(line, ',')) fields.emplace_back(f);
    if (!seen_header) {
      if (fields != header) throw InputError("line " + std::to_string(lineno) + ": unexpected header '" + line + "'");
      seen_header = true;
      continue;
    }
    if (fields.size() != header.size()) {
      throw InputError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " fields");
    }
    rows.push_back(std::move(fields));
  }
  if (!seen_header) throw InputError("missing header line");
  return rows;
}

inline std::string join_header(const std::vector<std::string>& h) {
  std::string s;
  for (std::size_t i = 0; i < h.size(); ++i) s += (i ? "," : "") + h[i];
  return s + "\n";
}

}  // namespace detail

inline const std::vector<std::string> kTruthHeader{"frame", "group_id", "true_count"};
inline const std::vector<std::string> kTotalsHeader{"frame", "true_total"};
inline const std::vector<std::string> kSeriesHeader{"frame", "raw_total", "smoothed_total", "n_groups",
                                                    "n_components"};
inline const std::vector<std::string> kPlotHeader{"frame", "raw", "smoothed", "truth"};
inline const std::vector<std::string> kGroupsHeader{"frame", "group_id", "predicted", "weight", "smoothed"};

inline std::string truth_to_csv(const GroundTruth& t) {
  std::string s = detail::join_header(kTruthHeader);
  for (const auto& g : t.groups) {
    s += std::to_string(g.key.frame) + "," + std::to_string(g.key.group_id) + "," + std::to_string(g.count) + "\n";
  }
  return s;
}

inline std::string totals_to_csv(const GroundTruth& t) {
  std::string s = detail::join_header(kTotalsHeader);
  for (std::size_t k = 0; k < t.totals.size(); ++k) {
    s += std::to_string(t.frames.first + static_cast<FrameId>(k)) + "," + std::to_string(t.totals[k]) + "\n";
  }
  return s;
}

/// True group counts keyed by (frame, group_id).
inline std::map<GroupKey, std::int64_t> read_truth_counts(std::istream& is) {
  std::map<GroupKey, std::int64_t> out;
  for (const auto& r : detail::read_csv(is, kTruthHeader)) {
    const GroupKey k{parse_int(r[0]), parse_int(r[1])};
    if (!out.emplace(k, parse_int(r[2])).second) throw InputError("duplicate truth row for " + to_string(k));
  }
  return out;
}

/// Per-frame true totals; reads either a totals file or a group truth file (summed per frame).
inline std::map<FrameId, double> read_true_totals(std::istream& is) {
  std::string first;
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  std::istringstream probe(text);
  while (std::getline(probe, first) && (first.empty() || first.front() == '#')) {}
  if (!first.empty() && first.back() == '\r') first.pop_back();
  std::istringstream in(text);
  std::map<FrameId, double> out;
  if (first + "\n" == detail::join_header(kTruthHeader)) {
    for (const auto& [k, n] : read_truth_counts(in)) out[k.frame] += static_cast<double>(n);
    return out;
  }
  for (const auto& r : detail::read_csv(in, kTotalsHeader)) {
    const FrameId f = parse_int(r[0]);
    if (!out.emplace(f, parse_double(r[1])).second) throw InputError("duplicate total for frame " + std::to_string(f));
  }
  return out;
}

inline std::string series_to_csv(const FrameCountSeries& s) {
  std::string out = "# method: " + s.label + "\n" + detail::join_header(kSeriesHeader);
  for (const auto& f : s.frames) {
    out += std::to_string(f.frame) + "," + format_double(f.raw_total) + "," + format_double(f.smoothed_total) + "," +
           std::to_string(f.n_groups) + "," + std::to_string(f.n_components) + "\n";
  }
  return out;
}

/// Reads a series file back; per-group detail is not part of the format.
inline FrameCountSeries read_series(std::istream& is) {
  std::vector<std::string> comments;
  const auto rows = detail::read_csv(is, kSeriesHeader, &comments);
  FrameCountSeries s;
  for (const auto& c : comments) {
    const std::string tag = "# method: ";
    if (c.rfind(tag, 0) == 0) s.label = c.substr(tag.size());
  }
  for (const auto& r : rows) {
    FrameCount f;
    f.frame = parse_int(r[0]);
    f.raw_total = parse_double(r[1]);
    f.smoothed_total = parse_double(r[2]);
    f.n_groups = static_cast<std::size_t>(parse_int(r[3]));
    f.n_components = static_cast<std::size_t>(parse_int(r[4]));
    if (!s.frames.empty() && f.frame <= s.frames.back().frame) throw InputError("series frames must increase");
    s.frames.push_back(std::move(f));
  }
  return s;
}

/// Columns for plotting raw and smoothed curves against truth; truth is blank where unknown.
inline std::string plot_to_csv(const FrameCountSeries& s, const std::map<FrameId, double>& truth = {}) {
  std::string out = detail::join_header(kPlotHeader);
  for (const auto& f : s.frames) {
    auto it = truth.find(f.frame);
    out += std::to_string(f.frame) + "," + format_double(f.raw_total) + "," + format_double(f.smoothed_total) + "," +
           (it == truth.end() ? std::string() : format_double(it->second)) + "\n";
  }
  return out;
}

inline std::string groups_to_csv(const FrameCountSeries& s) {
  std::string out = detail::join_header(kGroupsHeader);
  for (const auto& f : s.frames) {
    for (const auto& g : f.groups) {
      out += std::to_string(g.key.frame) + "," + std::to_string(g.key.group_id) + "," + format_double(g.predicted) +
             "," + format_double(g.weight) + "," + format_double(g.smoothed) + "\n";
    }
  }
  return out;
}

/// Pairs every observation with its true group count.
inline std::vector<CalibrationSample> calibration_samples(std::span<const GroupObservation> obs,
                                                          const std::map<GroupKey, std::int64_t>& truth) {
  std::vector<CalibrationSample> out;
  out.reserve(obs.size());
  for (const auto& o : obs) {
    auto it = truth.find(o.key);
    if (it == truth.end()) throw InputError("no true count for " + to_string(o.key));
    out.push_back({o.predicted_count, it->second});
  }
  return out;
}

}  // namespace flowcount
