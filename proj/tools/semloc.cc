#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "semloc/dataset.h"
#include "semloc/errors.h"
#include "semloc/evaluation.h"
#include "semloc/pipeline.h"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kValidationFailure = 2;
constexpr int kConfigError = 3;

// Signals a bad dataset: reported with exit code 2.
struct ValidationFailed {};

void require_valid(const fs::path& data) {
  const semloc::ValidationReport report = semloc::validate_dataset(data);
  if (report.ok) return;
  for (const auto& f : report.findings) {
    std::cerr << "invalid dataset: " << f.subject << ": " << f.message << '\n';
  }
  throw ValidationFailed{};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw semloc::Error("cannot write " + path.string());
  out << text;
}

struct SynthArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a) {
  semloc::SynthRequest req = semloc::load_synth_request(a.spec);
  if (a.seed) req.scene.seed = *a.seed;
  const semloc::SyntheticScene scene = semloc::run_synth(req, a.out);
  std::cout << "wrote " << scene.dataset.model.images.size() << " database images, "
            << scene.dataset.queries.size() << " queries and "
            << scene.dataset.model.points.size() << " points to " << a.out << '\n';
  return kOk;
}

int cmd_build_map(const std::string& data) {
  require_valid(data);
  const semloc::Dataset ds = semloc::load_dataset(data);
  const semloc::SemanticMap map = semloc::build_map(ds);
  const fs::path cache = semloc::DatasetLayout(data).map_cache();
  semloc::save_semantic_map(map, cache);
  std::cout << "semantic map: " << map.size() << " of " << ds.model.points.size()
            << " points kept, written to " << cache.string() << '\n';
  return kOk;
}

struct LocalizeArgs {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k_day;
  std::optional<std::size_t> k_night;
  bool uniform_weights = false;
  std::optional<double> theta_min_deg;
  std::optional<double> inlier_px;
  std::optional<std::size_t> threads;
};

int cmd_localize(const LocalizeArgs& a) {
  semloc::RunConfig cfg;
  if (!a.config.empty()) cfg = semloc::load_run_config(a.config);
  if (!a.data.empty()) cfg.data = a.data;
  if (!a.out.empty()) cfg.out = a.out;
  if (a.seed) cfg.localizer.rng_seed = *a.seed;
  if (a.k_day) cfg.retrieval.k_day = *a.k_day;
  if (a.k_night) cfg.retrieval.k_night = *a.k_night;
  if (a.uniform_weights) cfg.localizer.uniform_weights = true;
  if (a.theta_min_deg) cfg.localizer.theta_min = *a.theta_min_deg * std::numbers::pi / 180.0;
  if (a.inlier_px) cfg.localizer.inlier_px = *a.inlier_px;
  if (a.threads) cfg.threads = *a.threads;
  if (cfg.data.empty() || cfg.out.empty()) {
    throw semloc::ConfigError("localize needs --data and --out (or both in --config)");
  }
  if (cfg.retrieval.k_day == 0 || cfg.retrieval.k_night == 0) {
    throw semloc::ConfigError("retrieval k must be at least 1");
  }
  cfg.localizer.validate();

  require_valid(cfg.data);
  const semloc::Dataset ds = semloc::load_dataset(cfg.data);
  const semloc::SemanticMap map = semloc::load_or_build_map(ds, cfg.data);
  const auto outcomes = semloc::localize_dataset(ds, map, cfg);

  std::optional<std::map<std::string, semloc::Pose>> gt;
  const fs::path gt_path = semloc::DatasetLayout(cfg.data).ground_truth();
  if (fs::exists(gt_path)) gt = semloc::load_poses(gt_path);

  fs::create_directories(cfg.out);
  semloc::write_poses(semloc::collect_poses(outcomes), cfg.out / "poses.txt");
  write_text(cfg.out / "report.json",
             semloc::make_run_report(outcomes, cfg, gt ? &*gt : nullptr));

  std::size_t localized = 0;
  for (const auto& o : outcomes) localized += o.result.pose ? 1 : 0;
  std::cout << "localized " << localized << " of " << outcomes.size() << " queries; poses in "
            << (cfg.out / "poses.txt").string() << '\n';
  return kOk;
}

int cmd_evaluate(const std::string& run, const std::string& gt) {
  const semloc::EvalReport report = semloc::evaluate_run(run, gt);
  std::size_t localized = 0;
  for (const auto& r : report.rows) localized += r.error ? 1 : 0;
  if (localized == 0) {
    spdlog::warn("no localized queries in {}", run);
  }
  write_text(fs::path(run) / "evaluation.json", semloc::eval_report_json(report));
  for (const auto& [tag, p] : report.percentages) {
    std::printf("%-6s %6.1f / %6.1f / %6.1f  (0.25m,2deg / 0.5m,5deg / 5m,10deg)\n", tag.c_str(),
                p[0], p[1], p[2]);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic match consistency visual localization"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--spec", synth.spec, "Scene/corruption JSON")->required();
  synth_cmd->add_option("--out", synth.out, "Output dataset directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Override the scene seed");

  std::string map_data;
  auto* map_cmd = app.add_subcommand("build-map", "Build and cache the semantic map");
  map_cmd->add_option("--data", map_data, "Dataset directory")->required();

  LocalizeArgs loc;
  auto* loc_cmd = app.add_subcommand("localize", "Localize every query of a dataset");
  loc_cmd->add_option("--config", loc.config, "Run configuration JSON");
  loc_cmd->add_option("--data", loc.data, "Dataset directory");
  loc_cmd->add_option("--out", loc.out, "Run output directory");
  loc_cmd->add_option("--seed", loc.seed, "RANSAC seed");
  loc_cmd->add_option("--k-day", loc.k_day, "Retrieved images for day queries");
  loc_cmd->add_option("--k-night", loc.k_night, "Retrieved images for night queries");
  loc_cmd->add_flag("--uniform-weights", loc.uniform_weights,
                    "Sample matches uniformly (non-semantic baseline)");
  loc_cmd->add_option("--theta-min-deg", loc.theta_min_deg, "Viewing-cone floor in degrees");
  loc_cmd->add_option("--inlier-px", loc.inlier_px, "RANSAC inlier threshold in pixels");
  loc_cmd->add_option("--threads", loc.threads, "Worker threads (0 = all cores)");

  std::string eval_run;
  std::string eval_gt;
  auto* eval_cmd = app.add_subcommand("evaluate", "Bucket pose errors of a run");
  eval_cmd->add_option("--run", eval_run, "Run directory holding poses.txt")->required();
  eval_cmd->add_option("--gt", eval_gt, "Ground-truth pose file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth);
    if (*map_cmd) return cmd_build_map(map_data);
    if (*loc_cmd) return cmd_localize(loc);
    if (*eval_cmd) return cmd_evaluate(eval_run, eval_gt);
  } catch (const ValidationFailed&) {
    return kValidationFailure;
  } catch (const semloc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const semloc::InfeasibleSpec& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidationFailure;
  }
  return kOk;
}
