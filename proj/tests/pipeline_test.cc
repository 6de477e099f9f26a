#include "semloc/pipeline.h"

#include <fstream>
#include <iterator>
#include <numbers>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "semloc/errors.h"
#include "test_support.h"

namespace semloc {
namespace {

namespace fs = std::filesystem;

TEST(RunConfig, DefaultsWhenKeysAreMissing) {
  const RunConfig c = parse_run_config("{}");
  EXPECT_EQ(c.retrieval.k_day, 30u);
  EXPECT_EQ(c.retrieval.k_night, 50u);
  EXPECT_DOUBLE_EQ(c.localizer.theta_min, 5.0 * std::numbers::pi / 180.0);
  EXPECT_EQ(c.localizer.inlier_px, 10.0);
  EXPECT_FALSE(c.localizer.uniform_weights);
}

TEST(RunConfig, ReadsEveryField) {
  const RunConfig c = parse_run_config(R"({
    "data": "d", "out": "o", "threads": 3,
    "retrieval": {"k_day": 7, "k_night": 9},
    "localizer": {"theta_min_deg": 10, "inlier_px": 4.5, "ransac_confidence": 0.999,
                  "ransac_max_iters": 500, "temp_pose_min_matches": 20,
                  "temp_pose_iters": 100, "rng_seed": 42, "ratio": 0.8,
                  "uniform_weights": true}
  })");
  EXPECT_EQ(c.data, fs::path("d"));
  EXPECT_EQ(c.out, fs::path("o"));
  EXPECT_EQ(c.threads, 3u);
  EXPECT_EQ(c.retrieval.k_day, 7u);
  EXPECT_EQ(c.retrieval.k_night, 9u);
  EXPECT_DOUBLE_EQ(c.localizer.theta_min, 10.0 * std::numbers::pi / 180.0);
  EXPECT_EQ(c.localizer.inlier_px, 4.5);
  EXPECT_EQ(c.localizer.ransac_confidence, 0.999);
  EXPECT_EQ(c.localizer.ransac_max_iters, 500u);
  EXPECT_EQ(c.localizer.temp_pose_min_matches, 20u);
  EXPECT_EQ(c.localizer.temp_pose_iters, 100u);
  EXPECT_EQ(c.localizer.rng_seed, 42u);
  EXPECT_EQ(c.localizer.ratio, 0.8);
  EXPECT_TRUE(c.localizer.uniform_weights);
}

TEST(RunConfig, RejectsBadInput) {
  EXPECT_THROW(parse_run_config("{"), ConfigError);
  EXPECT_THROW(parse_run_config("[]"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"colour": 1})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"localizer": {"ratio": 1.5}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"localizer": {"inlier_px": "ten"}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"retrieval": {"k_day": 0}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"retrieval": {"k_day": -3}})"), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/run.json"), ConfigError);
}

TEST(SynthRequest, ParsesSceneAndCorruption) {
  const SynthRequest r = parse_synth_request(R"({
    "scene": {"n_points": 300, "n_db_images": 16, "n_queries": 5, "pixel_noise": 0.5,
              "twin_offset": 120, "camera": {"fx": 400, "fy": 400, "cx": 200, "cy": 150,
                                             "width": 400, "height": 300}},
    "corruption": {"wrong_retrieval_rate": 0.5, "k": 8, "seed": 11}
  })");
  EXPECT_EQ(r.scene.n_points, 300u);
  EXPECT_EQ(r.scene.n_db_images, 16u);
  EXPECT_EQ(r.scene.pixel_noise, 0.5);
  EXPECT_EQ(r.scene.twin_offset, 120.0);
  EXPECT_EQ(r.scene.camera.width, 400);
  ASSERT_TRUE(r.corruption.has_value());
  EXPECT_EQ(r.corruption->wrong_retrieval_rate, 0.5);
  EXPECT_EQ(r.corruption->k, 8u);
  EXPECT_EQ(r.corruption_seed, 11u);
  EXPECT_FALSE(parse_synth_request(R"({"scene": {}})").corruption.has_value());
  EXPECT_THROW(parse_synth_request(R"({"scene": {"n_pointz": 3}})"), ConfigError);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Scene written to disk and reloaded, as the command-line tool would see it.
struct DiskScene {
  fs::path root;
  SyntheticScene scene;
  Dataset dataset;
  SemanticMap map;
};

DiskScene disk_scene(const std::string& tag, const SynthRequest& request) {
  DiskScene d;
  d.root = testing::make_temp_dir(tag);
  d.scene = run_synth(request, d.root);
  d.dataset = load_dataset(d.root);
  d.map = load_or_build_map(d.dataset, d.root);
  return d;
}

SynthRequest noiseless_request() {
  SynthRequest r;
  r.scene.n_points = 200;
  r.scene.n_db_images = 12;
  r.scene.n_queries = 4;
  r.scene.seed = 31;
  return r;
}

TEST(Pipeline, NoiselessSceneLocalizesWithBothWeightings) {
  const DiskScene d = disk_scene("pipe_clean", noiseless_request());
  for (const bool uniform : {false, true}) {
    RunConfig cfg;
    cfg.retrieval = {10, 10};
    cfg.localizer.uniform_weights = uniform;
    cfg.threads = 2;
    const auto outcomes = localize_dataset(d.dataset, d.map, cfg);
    ASSERT_EQ(outcomes.size(), 4u);
    for (const QueryOutcome& o : outcomes) {
      ASSERT_TRUE(o.result.pose.has_value()) << o.name;
      EXPECT_LT(pose_error(*o.result.pose, d.scene.ground_truth.at(o.name)).translation_m, 1e-3)
          << o.name << (uniform ? " uniform" : " semantic");
    }
  }
}

TEST(Pipeline, ResultsIndependentOfThreadCount) {
  const DiskScene d = disk_scene("pipe_threads", noiseless_request());
  RunConfig cfg;
  cfg.retrieval = {6, 6};
  cfg.threads = 1;
  const auto one = make_run_report(localize_dataset(d.dataset, d.map, cfg), cfg, nullptr);
  cfg.threads = 3;
  const auto three = make_run_report(localize_dataset(d.dataset, d.map, cfg), cfg, nullptr);
  // The thread count is not part of the report, so the documents must agree.
  EXPECT_EQ(one, three);
}

TEST(Pipeline, ReportStructure) {
  const DiskScene d = disk_scene("pipe_report", noiseless_request());
  RunConfig cfg;
  cfg.retrieval = {5, 5};
  const auto outcomes = localize_dataset(d.dataset, d.map, cfg);
  const auto report = nlohmann::json::parse(make_run_report(outcomes, cfg, &d.scene.ground_truth));
  EXPECT_EQ(report.at("schema"), 1);
  EXPECT_EQ(report.at("summary").at("queries"), 4);
  EXPECT_EQ(report.at("queries").size(), 4u);
  const auto& q = report.at("queries").at(0);
  EXPECT_EQ(q.at("candidates").size(), 5u);
  EXPECT_TRUE(q.contains("t_err_m"));
  EXPECT_EQ(report.at("evaluation").at("percentages").at("all").at("fine"), 100.0);
  const auto bare = nlohmann::json::parse(make_run_report(outcomes, cfg, nullptr));
  EXPECT_FALSE(bare.contains("evaluation"));
  EXPECT_FALSE(bare.at("queries").at(0).contains("t_err_m"));
}

TEST(Pipeline, MapCacheIsUsedWhenPresent) {
  const DiskScene d = disk_scene("pipe_cache", noiseless_request());
  const SemanticMap built = build_map(d.dataset);
  save_semantic_map(built, DatasetLayout(d.root).map_cache());
  EXPECT_EQ(load_or_build_map(d.dataset, d.root), built);
  std::ofstream(DatasetLayout(d.root).map_cache(), std::ios::binary) << "junk";
  EXPECT_THROW(load_or_build_map(d.dataset, d.root), BadMagic);
}

TEST(EvaluateRun, EmptyPoseFileGivesZeros) {
  const DiskScene d = disk_scene("pipe_eval", noiseless_request());
  const fs::path run = testing::make_temp_dir("pipe_eval_run");
  std::ofstream(run / "poses.txt");
  const EvalReport r = evaluate_run(run, DatasetLayout(d.root).ground_truth());
  EXPECT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.percentages.at("all"), (std::array<double, 3>{0, 0, 0}));
}

TEST(EvaluateRun, MatchesGroundTruthExactly) {
  const DiskScene d = disk_scene("pipe_eval_gt", noiseless_request());
  const fs::path run = testing::make_temp_dir("pipe_eval_gt_run");
  write_poses(d.scene.ground_truth, run / "poses.txt");
  const EvalReport r = evaluate_run(run, DatasetLayout(d.root).ground_truth());
  EXPECT_EQ(r.percentages.at("all"), (std::array<double, 3>{100, 100, 100}));
  const auto json = nlohmann::json::parse(eval_report_json(r));
  EXPECT_EQ(json.at("percentages").at("all").at("fine"), 100.0);
}

#ifdef SEMLOC_CLI_PATH

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string(SEMLOC_CLI_PATH) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testing::make_temp_dir("cli");
    std::ofstream(dir_ / "spec.json") << R"({"scene": {"n_points": 250, "n_db_images": 12,
      "n_queries": 4, "pixel_noise": 0.5, "seed": 4}})";
    ASSERT_EQ(run_cli("synth --spec '" + (dir_ / "spec.json").string() + "' --out '" +
                          (dir_ / "data").string() + "'",
                      dir_ / "synth.log"),
              0)
        << slurp(dir_ / "synth.log");
  }

  std::string data() const { return "'" + (dir_ / "data").string() + "'"; }
  fs::path dir_;
};

TEST_F(Cli, EndToEndLocalizeAndEvaluate) {
  ASSERT_EQ(run_cli("build-map --data " + data(), dir_ / "map.log"), 0) << slurp(dir_ / "map.log");
  EXPECT_TRUE(fs::exists(dir_ / "data" / "semantic_map.bin"));
  const fs::path out = dir_ / "run";
  ASSERT_EQ(run_cli("localize --data " + data() + " --out '" + out.string() + "' --k-day 8",
                    dir_ / "loc.log"),
            0)
      << slurp(dir_ / "loc.log");
  ASSERT_EQ(run_cli("evaluate --run '" + out.string() + "' --gt '" +
                        (dir_ / "data" / "ground_truth.txt").string() + "'",
                    dir_ / "eval.log"),
            0);
  const auto eval = nlohmann::json::parse(slurp(out / "evaluation.json"));
  EXPECT_EQ(eval.at("percentages").at("all").at("fine"), 100.0);
  EXPECT_NE(slurp(dir_ / "eval.log").find("100.0"), std::string::npos);
}

TEST_F(Cli, RepeatedRunsAreByteIdentical) {
  const std::string base = "localize --data " + data() + " --k-day 6 --seed 3 --out ";
  ASSERT_EQ(run_cli(base + "'" + (dir_ / "a").string() + "' --threads 1", dir_ / "a.log"), 0);
  ASSERT_EQ(run_cli(base + "'" + (dir_ / "b").string() + "' --threads 2", dir_ / "b.log"), 0);
  EXPECT_EQ(slurp(dir_ / "a" / "poses.txt"), slurp(dir_ / "b" / "poses.txt"));
  EXPECT_EQ(slurp(dir_ / "a" / "report.json"), slurp(dir_ / "b" / "report.json"));
}

TEST_F(Cli, UniformWeightsFlagReachesReport) {
  const fs::path out = dir_ / "u";
  ASSERT_EQ(run_cli("localize --data " + data() + " --k-day 6 --uniform-weights --out '" +
                        out.string() + "'",
                    dir_ / "u.log"),
            0);
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  EXPECT_EQ(report.at("config").at("localizer").at("uniform_weights"), true);
}

TEST_F(Cli, MissingRasterExitsTwoAndNamesFile) {
  const fs::path victim = DatasetLayout(dir_ / "data").db_labels("db_0003");
  ASSERT_TRUE(fs::exists(victim)) << victim;
  fs::remove(victim);
  EXPECT_EQ(run_cli("localize --data " + data() + " --out '" + (dir_ / "r").string() + "'",
                    dir_ / "bad.log"),
            2);
  EXPECT_NE(slurp(dir_ / "bad.log").find("db_0003.labels.pgm"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "r" / "poses.txt"));
}

TEST_F(Cli, BadConfigExitsThree) {
  std::ofstream(dir_ / "bad.json") << R"({"localizer": {"ratio": 7}})";
  EXPECT_EQ(run_cli("localize --config '" + (dir_ / "bad.json").string() + "' --data " + data() +
                        " --out '" + (dir_ / "r").string() + "'",
                    dir_ / "cfg.log"),
            3);
  EXPECT_EQ(run_cli("localize --data " + data() + " --bogus-flag", dir_ / "flag.log"), 3);
}

TEST_F(Cli, EvaluateEmptyRunGivesZeros) {
  const fs::path run = dir_ / "empty";
  fs::create_directories(run);
  std::ofstream(run / "poses.txt");
  EXPECT_EQ(run_cli("evaluate --run '" + run.string() + "' --gt '" +
                        (dir_ / "data" / "ground_truth.txt").string() + "'",
                    dir_ / "e.log"),
            0);
  const auto eval = nlohmann::json::parse(slurp(run / "evaluation.json"));
  EXPECT_EQ(eval.at("percentages").at("all"),
            nlohmann::json({{"fine", 0.0}, {"medium", 0.0}, {"coarse", 0.0}}));
}

#endif

}  // namespace
}  // namespace semloc
