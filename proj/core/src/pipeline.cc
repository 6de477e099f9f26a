#include "semloc/pipeline.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "semloc/errors.h"
#include "semloc/random.h"

namespace semloc {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_object(const std::string& text, const char* what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
  if (!j.is_object()) {
    throw ConfigError(std::string(what) + " must be a JSON object");
  }
  return j;
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) ==
        allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

// Copies j[key] into out when present; a type mismatch is a ConfigError.
template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!it->is_number_unsigned()) throw ConfigError("");
    }
    out = it->get<T>();
  } catch (const std::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
  }
}

const json& section(const json& j, const char* key, const std::string& where) {
  static const json empty = json::object();
  const auto it = j.find(key);
  if (it == j.end()) return empty;
  if (!it->is_object()) {
    throw ConfigError("'" + std::string(key) + "' in " + where + " must be an object");
  }
  return *it;
}

void validate_retrieval(const RetrievalConfig& r) {
  if (r.k_day == 0 || r.k_night == 0) {
    throw ConfigError("retrieval k must be at least 1");
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  const json j = parse_object(text, "run config");
  reject_unknown(j, {"data", "out", "retrieval", "localizer", "threads"}, "run config");
  RunConfig cfg;
  std::string data;
  std::string out;
  read(j, "data", data, "run config");
  read(j, "out", out, "run config");
  cfg.data = data;
  cfg.out = out;
  read(j, "threads", cfg.threads, "run config");

  const json& r = section(j, "retrieval", "run config");
  reject_unknown(r, {"k_day", "k_night"}, "retrieval");
  read(r, "k_day", cfg.retrieval.k_day, "retrieval");
  read(r, "k_night", cfg.retrieval.k_night, "retrieval");
  validate_retrieval(cfg.retrieval);

  const json& l = section(j, "localizer", "run config");
  reject_unknown(l,
                 {"theta_min_deg", "inlier_px", "ransac_confidence", "ransac_max_iters",
                  "temp_pose_min_matches", "temp_pose_iters", "rng_seed", "ratio",
                  "uniform_weights"},
                 "localizer");
  LocalizerConfig& lc = cfg.localizer;
  double theta_deg = lc.theta_min / kDegToRad;
  read(l, "theta_min_deg", theta_deg, "localizer");
  lc.theta_min = theta_deg * kDegToRad;
  read(l, "inlier_px", lc.inlier_px, "localizer");
  read(l, "ransac_confidence", lc.ransac_confidence, "localizer");
  read(l, "ransac_max_iters", lc.ransac_max_iters, "localizer");
  read(l, "temp_pose_min_matches", lc.temp_pose_min_matches, "localizer");
  read(l, "temp_pose_iters", lc.temp_pose_iters, "localizer");
  read(l, "rng_seed", lc.rng_seed, "localizer");
  read(l, "ratio", lc.ratio, "localizer");
  read(l, "uniform_weights", lc.uniform_weights, "localizer");
  lc.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) { return parse_run_config(read_text(path)); }

SynthRequest parse_synth_request(const std::string& text) {
  const json j = parse_object(text, "synth spec");
  reject_unknown(j, {"scene", "corruption"}, "synth spec");
  SynthRequest req;
  const json& s = section(j, "scene", "synth spec");
  reject_unknown(s,
                 {"n_points", "n_db_images", "n_queries", "extent", "ring_radius",
                  "descriptor_dim", "global_dim", "pixel_noise", "observation_noise",
                  "clutter_keypoints", "dynamic_fraction", "night_fraction", "twin_offset",
                  "octant_labels", "dynamic_label", "camera", "seed"},
                 "scene");
  SceneSpec& sc = req.scene;
  read(s, "n_points", sc.n_points, "scene");
  read(s, "n_db_images", sc.n_db_images, "scene");
  read(s, "n_queries", sc.n_queries, "scene");
  read(s, "extent", sc.extent, "scene");
  read(s, "ring_radius", sc.ring_radius, "scene");
  read(s, "descriptor_dim", sc.descriptor_dim, "scene");
  read(s, "global_dim", sc.global_dim, "scene");
  read(s, "pixel_noise", sc.pixel_noise, "scene");
  read(s, "observation_noise", sc.observation_noise, "scene");
  read(s, "clutter_keypoints", sc.clutter_keypoints, "scene");
  read(s, "dynamic_fraction", sc.dynamic_fraction, "scene");
  read(s, "night_fraction", sc.night_fraction, "scene");
  read(s, "twin_offset", sc.twin_offset, "scene");
  read(s, "octant_labels", sc.octant_labels, "scene");
  read(s, "dynamic_label", sc.dynamic_label, "scene");
  read(s, "seed", sc.seed, "scene");
  const json& cam = section(s, "camera", "scene");
  reject_unknown(cam, {"fx", "fy", "cx", "cy", "width", "height"}, "camera");
  read(cam, "fx", sc.camera.fx, "camera");
  read(cam, "fy", sc.camera.fy, "camera");
  read(cam, "cx", sc.camera.cx, "camera");
  read(cam, "cy", sc.camera.cy, "camera");
  read(cam, "width", sc.camera.width, "camera");
  read(cam, "height", sc.camera.height, "camera");

  if (j.contains("corruption")) {
    const json& c = section(j, "corruption", "synth spec");
    reject_unknown(c,
                   {"wrong_retrieval_rate", "descriptor_noise", "label_flip_rate",
                    "outlier_match_rate", "k", "seed"},
                   "corruption");
    CorruptionSpec cs;
    read(c, "wrong_retrieval_rate", cs.wrong_retrieval_rate, "corruption");
    read(c, "descriptor_noise", cs.descriptor_noise, "corruption");
    read(c, "label_flip_rate", cs.label_flip_rate, "corruption");
    read(c, "outlier_match_rate", cs.outlier_match_rate, "corruption");
    read(c, "k", cs.k, "corruption");
    read(c, "seed", req.corruption_seed, "corruption");
    try {
      cs.validate();
    } catch (const InfeasibleSpec& e) {
      throw ConfigError(e.what());
    }
    req.corruption = cs;
  }
  return req;
}

SynthRequest load_synth_request(const fs::path& path) {
  return parse_synth_request(read_text(path));
}

SyntheticScene run_synth(const SynthRequest& request, const fs::path& out) {
  SyntheticScene scene = generate_scene(request.scene);
  std::optional<CorruptionRecord> record;
  if (request.corruption) {
    record = corrupt(scene, *request.corruption, request.corruption_seed);
  }
  write_scene(scene, out);
  if (record) {
    write_corruption_record(*record, out / "corruption.json");
  }
  return scene;
}

SemanticMap build_map(const Dataset& dataset) {
  return build_semantic_map(dataset.model, dataset.db_labels, dataset.classes);
}

SemanticMap load_or_build_map(const Dataset& dataset, const fs::path& root) {
  const fs::path cache = DatasetLayout(root).map_cache();
  if (fs::exists(cache)) {
    return load_semantic_map(cache, dataset.classes);
  }
  return build_map(dataset);
}

std::vector<QueryOutcome> localize_dataset(const Dataset& dataset, const SemanticMap& map,
                                           const RunConfig& config) {
  RetrievalConfig retrieval = config.retrieval;
  const std::size_t n_db = dataset.db_globals.size();
  for (std::size_t* k : {&retrieval.k_day, &retrieval.k_night}) {
    if (*k > n_db) {
      spdlog::warn("retrieval k={} exceeds the {} database images; using {}", *k, n_db, n_db);
      *k = n_db;
    }
  }

  std::vector<const QueryData*> queries;
  for (const QueryData& q : dataset.queries) queries.push_back(&q);
  std::sort(queries.begin(), queries.end(),
            [](const QueryData* a, const QueryData* b) { return a->name < b->name; });

  std::vector<QueryOutcome> outcomes(queries.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < queries.size(); i = next++) {
      const QueryData& q = *queries[i];
      outcomes[i].name = q.name;
      outcomes[i].condition = q.condition;
      outcomes[i].result = localize_query(q, map, dataset, retrieval, config.localizer,
                                          mix_seed(config.localizer.rng_seed, i));
    }
  };
  std::size_t n_threads = config.threads;
  if (n_threads == 0) n_threads = std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, std::max<std::size_t>(queries.size(), 1));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  return outcomes;
}

std::map<std::string, Pose> collect_poses(const std::vector<QueryOutcome>& outcomes) {
  std::map<std::string, Pose> poses;
  for (const QueryOutcome& o : outcomes) {
    if (o.result.pose) poses[o.name] = *o.result.pose;
  }
  return poses;
}

namespace {

ordered_json buckets_json(const ThresholdBuckets& b) {
  ordered_json j = ordered_json::array();
  for (const Threshold& t : b.as_array()) {
    j.push_back({{"meters", t.meters}, {"degrees", t.degrees}});
  }
  return j;
}

ordered_json percentages_json(const std::map<std::string, std::array<double, 3>>& pct) {
  ordered_json j = ordered_json::object();
  for (const auto& [tag, p] : pct) {
    j[tag] = {{"fine", p[0]}, {"medium", p[1]}, {"coarse", p[2]}};
  }
  return j;
}

}  // namespace

std::string make_run_report(const std::vector<QueryOutcome>& outcomes, const RunConfig& config,
                            const std::map<std::string, Pose>* ground_truth) {
  ordered_json j;
  j["schema"] = 1;
  const LocalizerConfig& lc = config.localizer;
  j["config"] = {{"retrieval", {{"k_day", config.retrieval.k_day},
                                {"k_night", config.retrieval.k_night}}},
                 {"localizer",
                  {{"theta_min_deg", lc.theta_min / kDegToRad},
                   {"inlier_px", lc.inlier_px},
                   {"ransac_confidence", lc.ransac_confidence},
                   {"ransac_max_iters", lc.ransac_max_iters},
                   {"temp_pose_min_matches", lc.temp_pose_min_matches},
                   {"temp_pose_iters", lc.temp_pose_iters},
                   {"rng_seed", lc.rng_seed},
                   {"ratio", lc.ratio},
                   {"uniform_weights", lc.uniform_weights}}}};

  std::size_t localized = 0;
  std::size_t fallback = 0;
  std::vector<QueryRow> rows;
  ordered_json qs = ordered_json::array();
  for (const QueryOutcome& o : outcomes) {
    const LocalizationResult& r = o.result;
    localized += r.pose ? 1 : 0;
    fallback += r.used_fallback ? 1 : 0;
    ordered_json q;
    q["name"] = o.name;
    q["condition"] = to_string(o.condition);
    q["localized"] = r.pose.has_value();
    q["inliers"] = r.inliers;
    q["matches"] = r.total_matches;
    q["fallback"] = r.used_fallback;
    QueryRow row{o.name, o.condition, std::nullopt, r.inliers, r.used_fallback};
    if (ground_truth != nullptr) {
      const auto gt = ground_truth->find(o.name);
      if (gt != ground_truth->end() && r.pose) {
        row.error = pose_error(*r.pose, gt->second);
        q["t_err_m"] = row.error->translation_m;
        q["r_err_deg"] = row.error->rotation_deg;
      } else {
        q["t_err_m"] = nullptr;
        q["r_err_deg"] = nullptr;
      }
    }
    ordered_json cands = ordered_json::array();
    for (const ScoredCandidate& c : r.candidates) {
      cands.push_back({{"image", c.image_id},
                       {"matches", c.matches.size()},
                       {"temp_pose", c.temp_pose.has_value()},
                       {"score", c.score}});
    }
    q["candidates"] = std::move(cands);
    qs.push_back(std::move(q));
    rows.push_back(std::move(row));
  }
  j["summary"] = {{"queries", outcomes.size()}, {"localized", localized}, {"fallback", fallback}};
  if (ground_truth != nullptr) {
    const EvalReport report = make_report(rows);
    j["evaluation"] = {{"buckets", buckets_json(report.buckets)},
                       {"percentages", percentages_json(report.percentages)}};
  }
  j["queries"] = std::move(qs);
  return j.dump(2) + "\n";
}

EvalReport evaluate_run(const fs::path& run_dir, const fs::path& ground_truth) {
  const std::map<std::string, Pose> gt = load_poses(ground_truth);
  const std::map<std::string, Pose> poses = load_poses(run_dir / "poses.txt");

  std::map<std::string, Condition> conditions;
  const fs::path report_path = run_dir / "report.json";
  if (fs::exists(report_path)) {
    try {
      const json report = json::parse(read_text(report_path));
      for (const json& q : report.at("queries")) {
        if (const auto c = parse_condition(q.at("condition").get<std::string>())) {
          conditions[q.at("name").get<std::string>()] = *c;
        }
      }
    } catch (const json::exception& e) {
      throw ParseError(report_path.string(), e.what());
    }
  }

  for (const auto& [name, pose] : poses) {
    if (!gt.contains(name)) {
      spdlog::warn("pose for '{}' has no ground truth; ignored", name);
    }
  }
  std::vector<QueryRow> rows;
  for (const auto& [name, gt_pose] : gt) {
    QueryRow row;
    row.name = name;
    if (const auto c = conditions.find(name); c != conditions.end()) row.condition = c->second;
    if (const auto p = poses.find(name); p != poses.end()) {
      row.error = pose_error(p->second, gt_pose);
    }
    rows.push_back(std::move(row));
  }
  return make_report(std::move(rows));
}

std::string eval_report_json(const EvalReport& report) {
  ordered_json j;
  j["schema"] = 1;
  j["buckets"] = buckets_json(report.buckets);
  j["percentages"] = percentages_json(report.percentages);
  ordered_json qs = ordered_json::array();
  for (const QueryRow& r : report.rows) {
    ordered_json q;
    q["name"] = r.name;
    q["condition"] = to_string(r.condition);
    q["localized"] = r.error.has_value();
    if (r.error) {
      q["t_err_m"] = r.error->translation_m;
      q["r_err_deg"] = r.error->rotation_deg;
    } else {
      q["t_err_m"] = nullptr;
      q["r_err_deg"] = nullptr;
    }
    qs.push_back(std::move(q));
  }
  j["queries"] = std::move(qs);
  return j.dump(2) + "\n";
}

}  // namespace semloc
