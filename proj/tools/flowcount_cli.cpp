#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowcount/flowcount.hpp"

namespace fc = flowcount;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitSolver = 3;

struct FrameFlags {
  std::optional<fc::FrameId> first;
  std::optional<fc::FrameId> last;

  void add(CLI::App* app) {
    app->add_option("--first-frame", first, "First frame of the sequence");
    app->add_option("--last-frame", last, "Last frame of the sequence");
  }

  std::optional<fc::FrameRange> range(const fc::ObservationStore& store) const {
    if (!first && !last) return std::nullopt;
    const auto observed = store.frames();
    fc::FrameRange r{first.value_or(observed.first), last.value_or(observed.last)};
    if (r.empty()) throw fc::InputError("--first-frame is after --last-frame");
    return r;
  }
};

std::int64_t half_width_from_layers(int layers) {
  if (layers < 3 || layers % 2 == 0) throw fc::InputError("--layers must be odd and >= 3");
  return (layers - 1) / 2;
}

int cmd_synth(const std::string& spec_path, const std::string& out, std::optional<std::uint64_t> seed,
              const std::string& calibration_path) {
  auto spec = fc::read_scenario_file(spec_path);
  if (seed) spec.seed = *seed;
  std::optional<fc::CalibrationTable> table;
  if (!calibration_path.empty()) table = fc::calibration_from_text(fc::read_text_file(calibration_path));
  const auto scenario = fc::generate(spec, table);
  std::ostringstream obs;
  fc::write_observations(obs, scenario.observations);
  fc::write_text_file(out + ".observations.jsonl", obs.str());
  fc::write_text_file(out + ".truth.csv", fc::truth_to_csv(scenario.truth));
  fc::write_text_file(out + ".totals.csv", fc::totals_to_csv(scenario.truth));
  return 0;
}

int cmd_calibrate(const std::string& obs_path, const std::string& truth_path, const std::string& out,
                  const std::string& mode, const std::string& weight) {
  const auto obs = fc::read_observations_file(obs_path);
  std::istringstream truth_in(fc::read_text_file(truth_path));
  const auto truth = fc::read_truth_counts(truth_in);
  const auto table = fc::fit_calibration(fc::calibration_samples(obs, truth), fc::parse_correction_mode(mode),
                                         fc::parse_weight_mode(weight));
  fc::write_text_file(out, fc::to_text(table));
  return 0;
}

struct RunFlags {
  std::string observations;
  std::string scene;
  std::string method = "qp";
  int layers = 3;
  std::string calibration;
  bool round = false;
  std::string truth;
  std::string out;
  bool groups = false;
  FrameFlags frames;
};

int cmd_run(const RunFlags& f) {
  fc::RunConfig cfg;
  cfg.method = fc::parse_method(f.method);
  if (cfg.method != fc::Method::none) cfg.half_width = half_width_from_layers(f.layers);
  cfg.scene = fc::read_scene_file(f.scene);
  cfg.rounding = f.round;
  if (!f.calibration.empty()) cfg.calibration = fc::calibration_from_text(fc::read_text_file(f.calibration));
  cfg.workers = fc::workers_from_env();
  const auto obs = fc::read_observations_file(f.observations);
  if (obs.empty()) throw fc::InputError("no observations in '" + f.observations + "'");
  cfg.frames = f.frames.range(fc::ObservationStore(obs));

  std::map<fc::FrameId, double> truth;
  if (!f.truth.empty()) {
    std::istringstream in(fc::read_text_file(f.truth));
    truth = fc::read_true_totals(in);
  }
  const auto series = fc::run(obs, cfg);
  fc::write_text_file(f.out + ".series.csv", fc::series_to_csv(series));
  fc::write_text_file(f.out + ".plot.csv", fc::plot_to_csv(series, truth));
  if (f.groups) fc::write_text_file(f.out + ".groups.csv", fc::groups_to_csv(series));
  return 0;
}

int cmd_eval(const std::string& truth_path, const std::vector<std::string>& series_paths) {
  std::istringstream truth_in(fc::read_text_file(truth_path));
  const auto truth = fc::read_true_totals(truth_in);
  std::cout << std::left << std::setw(12) << "method" << std::right << std::setw(10) << "MAE" << std::setw(10) << "MRE"
            << "\n";
  for (const auto& path : series_paths) {
    std::istringstream in(fc::read_text_file(path));
    auto series = fc::read_series(in);
    if (series.label.empty()) series.label = path;
    std::map<fc::FrameId, double> matched;
    for (const auto& fr : series.frames) {
      auto it = truth.find(fr.frame);
      if (it == truth.end()) throw fc::InputError(path + ": no ground truth for frame " + std::to_string(fr.frame));
      matched.emplace(fr.frame, it->second);
    }
    const auto r = fc::evaluate(series, matched);
    std::ostringstream mre;
    mre << std::fixed << std::setprecision(2) << 100.0 * r.mre << "%";
    std::cout << std::left << std::setw(12) << series.label << std::right << std::fixed << std::setprecision(4)
              << std::setw(10) << r.mae << std::setw(10) << mre.str() << "\n";
    if (!r.excluded_frames.empty()) {
      std::cerr << series.label << ": " << r.excluded_frames.size() << " frame(s) with zero true count excluded from MRE\n";
    }
  }
  return 0;
}

int cmd_graph_export(const std::string& obs_path, const std::string& scene_path, std::optional<fc::FrameId> center,
                     int layers, const FrameFlags& frames, const std::string& out) {
  const auto scene = fc::read_scene_file(scene_path);
  const fc::ObservationStore store(fc::read_observations_file(obs_path));
  fc::FrameRange window = store.frames();
  if (center) {
    window = fc::window_frames(frames.range(store).value_or(store.frames()), *center, half_width_from_layers(layers));
  } else if (auto r = frames.range(store)) {
    window = *r;
  }
  const std::string dot = fc::to_dot(fc::build_network(store, scene, window));
  if (out.empty() || out == "-") {
    std::cout << dot;
  } else {
    fc::write_text_file(out, dot);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporally consistent crowd counts from per-group predictions"};
  app.require_subcommand(1);

  std::string spec_path;
  std::string synth_out;
  std::optional<std::uint64_t> seed;
  std::string synth_calibration;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scenario with ground truth");
  synth->add_option("spec", spec_path, "Scenario spec (JSON)")->required();
  synth->add_option("--out", synth_out, "Output prefix")->required();
  synth->add_option("--seed", seed, "Override the scenario's seed");
  synth->add_option("--calibration", synth_calibration, "Derive observation weights from a calibration table");

  std::string cal_obs;
  std::string cal_truth;
  std::string cal_out;
  std::string cal_mode = "replace-mean";
  std::string cal_weight = "variance";
  auto* calibrate = app.add_subcommand("calibrate", "Fit a calibration table from predictions and true counts");
  calibrate->add_option("--observations", cal_obs, "Observations (JSON Lines)")->required();
  calibrate->add_option("--truth", cal_truth, "Group truth CSV (frame,group_id,true_count)")->required();
  calibrate->add_option("--out", cal_out, "Calibration table to write")->required();
  calibrate->add_option("--mode", cal_mode, "replace-mean or subtract-bias");
  calibrate->add_option("--weight", cal_weight, "variance or inverse-variance");

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Smooth per-frame counts over sliding windows");
  run->add_option("--observations", rf.observations, "Observations (JSON Lines)")->required();
  run->add_option("--scene", rf.scene, "Scene config (JSON)")->required();
  run->add_option("--method", rf.method, "qp, lp or none");
  run->add_option("--layers", rf.layers, "Window size 2l+1 (odd, >= 3)");
  run->add_option("--calibration", rf.calibration, "Calibration table");
  run->add_flag("--round", rf.round, "Round per-frame totals to integers");
  run->add_option("--truth", rf.truth, "Truth totals or group truth, copied into the plot file");
  run->add_flag("--groups", rf.groups, "Also write per-group detail");
  run->add_option("--out", rf.out, "Output prefix")->required();
  rf.frames.add(run);

  std::string eval_truth;
  std::vector<std::string> eval_series;
  auto* eval = app.add_subcommand("eval", "MAE and MRE of one or more series against ground truth");
  eval->add_option("--truth", eval_truth, "Truth totals or group truth CSV")->required();
  eval->add_option("series", eval_series, "Series files")->required();

  std::string g_obs;
  std::string g_scene;
  std::optional<fc::FrameId> g_center;
  int g_layers = 3;
  FrameFlags g_frames;
  std::string g_out;
  auto* graph = app.add_subcommand("graph-export", "Write a window's flow network as DOT");
  graph->add_option("--observations", g_obs, "Observations (JSON Lines)")->required();
  graph->add_option("--scene", g_scene, "Scene config (JSON)")->required();
  graph->add_option("--center", g_center, "Centre frame of the window");
  graph->add_option("--layers", g_layers, "Window size 2l+1 (odd, >= 3)");
  graph->add_option("--out", g_out, "DOT file (stdout when omitted)");
  g_frames.add(graph);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*synth) return cmd_synth(spec_path, synth_out, seed, synth_calibration);
    if (*calibrate) return cmd_calibrate(cal_obs, cal_truth, cal_out, cal_mode, cal_weight);
    if (*run) return cmd_run(rf);
    if (*eval) return cmd_eval(eval_truth, eval_series);
    if (*graph) return cmd_graph_export(g_obs, g_scene, g_center, g_layers, g_frames, g_out);
  } catch (const fc::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fc::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitInput;
}
