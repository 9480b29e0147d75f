#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "test_support.hpp"

using namespace flowcount;

namespace {

template <class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ObservationJson, RoundTripPreservesEveryField) {
  GroupObservation a = fctest::box_group(3, 7, {1.5, 2, 30.25, 40}, 2.75, 0.5);
  a.prev_adjacency = {0, 4};
  a.touches_source = true;
  GroupObservation b;
  b.key = {4, 0};
  b.region = Region::from_mask(Mask({{2, 1, 5}, {3, 0, 2}}), Box{0, 2, 5, 4});
  b.predicted_count = 1e-17;
  b.touches_sink = true;
  GroupObservation c;
  c.key = {4, 1};
  c.predicted_count = 3.0;
  const std::vector<GroupObservation> obs{a, b, c};
  std::stringstream ss;
  write_observations(ss, obs);
  EXPECT_EQ(read_observations(ss), obs);
}

TEST(ObservationJson, DefaultsAndBlankLines) {
  std::istringstream in("\n{\"frame\": 1, \"group_id\": 2, \"predicted_count\": 3.5}\n  \n");
  const auto obs = read_observations(in);
  ASSERT_EQ(obs.size(), 1u);
  EXPECT_EQ(obs[0].weight, 1.0);
  EXPECT_FALSE(obs[0].region);
  EXPECT_TRUE(obs[0].prev_adjacency.empty());
  EXPECT_FALSE(obs[0].touches_source);
}

TEST(ObservationJson, ErrorsNameTheLine) {
  auto read = [](const std::string& text) {
    return error_of([&] {
      std::istringstream in(text);
      read_observations(in);
    });
  };
  const std::string ok = "{\"frame\": 1, \"group_id\": 0, \"predicted_count\": 1}\n";
  EXPECT_NE(read(ok + "{\"frame\": 1}\n").find("line 2"), std::string::npos);
  EXPECT_NE(read(ok + "not json\n").find("line 2"), std::string::npos);
  EXPECT_NE(read("{\"frame\": 1, \"group_id\": 0, \"predicted_count\": 1, \"colour\": 3}").find("colour"),
            std::string::npos);
  EXPECT_FALSE(read("{\"frame\": 1, \"group_id\": 0, \"predicted_count\": 1, \"x_min\": 3}").empty());
  EXPECT_FALSE(read("{\"frame\": \"one\", \"group_id\": 0, \"predicted_count\": 1}").empty());
  EXPECT_FALSE(read("{\"frame\": 1, \"group_id\": 0, \"predicted_count\": 1, \"mask\": [[1, 2]]}").empty());
  EXPECT_TRUE(read(ok).empty());
}

TEST(SceneJson, RoundTripAndDefaults) {
  const SceneConfig s{{0, 0, 20, 240}, {300, 0, 320, 240}, OverlapRule::explicit_adjacency};
  const auto back = scene_from_json(scene_to_json(s));
  EXPECT_EQ(back.entry, s.entry);
  EXPECT_EQ(back.exit, s.exit);
  EXPECT_EQ(back.overlap_rule, s.overlap_rule);
  const auto dflt = scene_from_json(nlohmann::json::parse(R"({"S": [0,0,1,1], "T": [2,0,3,1], "n_frames": 5})"));
  EXPECT_EQ(dflt.overlap_rule, OverlapRule::region_intersection);
  EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"({"S": [0,0,1,1]})")), InputError);
  EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"({"S": [0,0,1], "T": [2,0,3,1]})")), InputError);
  EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"({"S": [0,0,1,1], "T": [2,0,3,1], "overlap_rule": "x"})")),
               InputError);
}

TEST(ScenarioJson, RoundTrip) {
  ScenarioSpec s;
  s.n_frames = 42;
  s.first_frame = 3;
  s.arrival_rate = 0.125;
  s.noise = {NoiseKind::laplacian, 0.75, 0.05, 6.0};
  s.seed = 99;
  s.pedestrians.push_back({.appear = 3, .x = 10, .y = 20, .vx = 1, .vy = 0.5, .turn_at = 9, .turn_vx = -1});
  s.pedestrians.push_back({.appear = 3, .x = 50, .y = 60, .persistent = true});
  const auto back = scenario_from_json(scenario_to_json(s));
  EXPECT_EQ(scenario_to_json(back), scenario_to_json(s));
  EXPECT_EQ(back.noise.kind, NoiseKind::laplacian);
  EXPECT_EQ(back.pedestrians[0].turn_at, std::optional<FrameId>(9));
  EXPECT_TRUE(back.pedestrians[1].persistent);
}

TEST(ScenarioJson, RejectsMalformedSpecs) {
  auto parse = [](const char* text) { return error_of([&] { scenario_from_json(nlohmann::json::parse(text)); }); };
  const std::string scene = R"("S": [0,0,20,240], "T": [300,0,320,240])";
  EXPECT_TRUE(parse(("{" + scene + R"(, "n_frames": 10})").c_str()).empty());
  EXPECT_NE(parse(("{" + scene + R"(, "n_frames": 10, "speeed": 2})").c_str()).find("speeed"), std::string::npos);
  EXPECT_FALSE(parse(("{" + scene + "}").c_str()).empty());
  EXPECT_FALSE(parse(("{" + scene + R"(, "n_frames": 10, "noise": {"kind": "cauchy"}})").c_str()).empty());
  EXPECT_FALSE(parse(("{" + scene + R"(, "n_frames": 10, "arrival_rate": -1})").c_str()).empty());
}

TEST(Csv, TruthAndTotalsRoundTrip) {
  ScenarioSpec spec;
  spec.n_frames = 30;
  spec.arrival_rate = 0.5;
  const auto s = generate(spec);
  std::istringstream truth_in(truth_to_csv(s.truth));
  const auto counts = read_truth_counts(truth_in);
  EXPECT_EQ(counts.size(), s.truth.groups.size());
  for (const auto& g : s.truth.groups) EXPECT_EQ(counts.at(g.key), g.count);

  std::istringstream totals_in(totals_to_csv(s.truth));
  EXPECT_EQ(read_true_totals(totals_in), s.truth.totals_by_frame());

  // A group-truth file gives the same totals on frames with people.
  std::istringstream via_groups(truth_to_csv(s.truth));
  for (const auto& [f, n] : read_true_totals(via_groups)) EXPECT_EQ(n, s.truth.totals_by_frame().at(f));
}

TEST(Csv, SeriesRoundTripIsExact) {
  FrameCountSeries s;
  s.label = "LPL23";
  s.frames = {{.frame = 4, .raw_total = 0.1 + 0.2, .smoothed_total = 1.0 / 3.0, .n_groups = 2, .n_components = 1},
              {.frame = 5, .raw_total = 7, .smoothed_total = 6.999999999999999, .n_groups = 3, .n_components = 2}};
  std::istringstream in(series_to_csv(s));
  const auto back = read_series(in);
  EXPECT_EQ(back.label, "LPL23");
  ASSERT_EQ(back.frames.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(back.frames[k].frame, s.frames[k].frame);
    EXPECT_EQ(back.frames[k].raw_total, s.frames[k].raw_total);
    EXPECT_EQ(back.frames[k].smoothed_total, s.frames[k].smoothed_total);
    EXPECT_EQ(back.frames[k].n_groups, s.frames[k].n_groups);
    EXPECT_EQ(back.frames[k].n_components, s.frames[k].n_components);
  }
}

TEST(Csv, ErrorsAreReported) {
  auto totals = [](const std::string& text) {
    return error_of([&] {
      std::istringstream in(text);
      read_true_totals(in);
    });
  };
  EXPECT_NE(totals("frame,count\n1,2\n").find("header"), std::string::npos);
  EXPECT_NE(totals("frame,true_total\n1\n").find("line 2"), std::string::npos);
  EXPECT_FALSE(totals("frame,true_total\n1,2\n1,3\n").empty());
  EXPECT_FALSE(totals("").empty());
  EXPECT_FALSE(error_of([] {
                 std::istringstream in("frame,group_id,true_count\n1,1,2\n1,1,3\n");
                 read_truth_counts(in);
               }).empty());
  EXPECT_FALSE(error_of([] {
                 std::istringstream in("frame,raw_total,smoothed_total,n_groups,n_components\n2,1,1,1,1\n1,1,1,1,1\n");
                 read_series(in);
               }).empty());
}

TEST(Csv, PlotAndGroups) {
  FrameCountSeries s;
  s.frames = {{.frame = 1, .raw_total = 2, .smoothed_total = 2.5, .groups = {{{1, 0}, 2, 1, 2.5}}},
              {.frame = 2, .raw_total = 3, .smoothed_total = 3}};
  EXPECT_EQ(plot_to_csv(s, {{1, 3.0}}), "frame,raw,smoothed,truth\n1,2,2.5,3\n2,3,3,\n");
  EXPECT_EQ(groups_to_csv(s), "frame,group_id,predicted,weight,smoothed\n1,0,2,1,2.5\n");
}

TEST(Csv, CalibrationSamplesNeedTruth) {
  const std::vector<GroupObservation> obs{fctest::box_group(1, 0, {0, 0, 1, 1}, 2.4)};
  const auto samples = calibration_samples(obs, {{GroupKey{1, 0}, 3}});
  ASSERT_EQ(samples.size(), 1u);
  EXPECT_EQ(samples[0].predicted, 2.4);
  EXPECT_EQ(samples[0].actual, 3);
  EXPECT_THROW(calibration_samples(obs, {}), InputError);
}

TEST(Files, MissingFileIsAnInputError) {
  EXPECT_THROW(read_text_file("/nonexistent/flowcount/file"), InputError);
  const auto path = (std::filesystem::temp_directory_path() / "flowcount_io_test.txt").string();
  write_text_file(path, "abc\n");
  EXPECT_EQ(read_text_file(path), "abc\n");
  std::filesystem::remove(path);
}
