#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semloc/dataset.h"
#include "semloc/evaluation.h"
#include "semloc/localizer.h"
#include "semloc/retrieval.h"
#include "semloc/semantic_map.h"
#include "semloc/synth.h"

namespace semloc {

struct RunConfig {
  std::filesystem::path data;
  std::filesystem::path out;
  RetrievalConfig retrieval;
  LocalizerConfig localizer;
  std::size_t threads = 0;  // 0: one per hardware thread
};

// Reads a JSON run configuration. Unknown keys and out-of-range values raise
// ConfigError. Missing keys keep their defaults.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& json_text);

struct SynthRequest {
  SceneSpec scene;
  std::optional<CorruptionSpec> corruption;
  std::uint64_t corruption_seed = 0;
};

// {"scene": {...}, "corruption": {..., "seed": n}}; throws ConfigError.
SynthRequest load_synth_request(const std::filesystem::path& path);
SynthRequest parse_synth_request(const std::string& json_text);

// Generates, corrupts and writes a scene (plus corruption.json when a
// corruption block is present).
SyntheticScene run_synth(const SynthRequest& request, const std::filesystem::path& out);

SemanticMap build_map(const Dataset& dataset);
// Uses <root>/semantic_map.bin when present, otherwise builds in memory.
SemanticMap load_or_build_map(const Dataset& dataset, const std::filesystem::path& root);

struct QueryOutcome {
  std::string name;
  Condition condition = Condition::kDay;
  LocalizationResult result;
};

// Localizes every query on a worker pool. Query i of the name-sorted list
// uses seed mix_seed(rng_seed, i), so results do not depend on scheduling.
// Output is sorted by name.
std::vector<QueryOutcome> localize_dataset(const Dataset& dataset, const SemanticMap& map,
                                           const RunConfig& config);

std::map<std::string, Pose> collect_poses(const std::vector<QueryOutcome>& outcomes);

// report.json: stable key order, "schema": 1. Ground truth, when given,
// adds per-query errors and bucket percentages.
std::string make_run_report(const std::vector<QueryOutcome>& outcomes, const RunConfig& config,
                            const std::map<std::string, Pose>* ground_truth);

// Compares a run's poses with ground truth. Queries present in ground truth
// but absent from poses count as failed. Conditions come from the run's
// report.json when available, otherwise every query is treated as day.
EvalReport evaluate_run(const std::filesystem::path& run_dir,
                        const std::filesystem::path& ground_truth);
std::string eval_report_json(const EvalReport& report);

}  // namespace semloc
