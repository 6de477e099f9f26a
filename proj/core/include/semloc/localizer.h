#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "semloc/dataset.h"
#include "semloc/geometry.h"
#include "semloc/matching.h"
#include "semloc/random.h"
#include "semloc/retrieval.h"
#include "semloc/semantic_map.h"

namespace semloc {

struct LocalizerConfig {
  double theta_min = 5.0 * std::numbers::pi / 180.0;  // radians
  double inlier_px = 10.0;
  double ransac_confidence = 0.99;
  std::size_t ransac_max_iters = 10000;
  std::size_t temp_pose_min_matches = 12;
  std::size_t temp_pose_iters = 500;
  std::uint64_t rng_seed = 0;
  double ratio = 0.9;
  // Non-semantic baseline: scores are still computed but every merged match
  // is sampled with the same probability.
  bool uniform_weights = false;

  // Throws ConfigError when a field is out of range.
  void validate() const;
};

// Inclusive distance band plus the viewing-cone test, with the cone opened to
// at least theta_min.
bool visible(const SemanticPoint& point, const Eigen::Vector3d& query_center, double theta_min);

// Pairs each match with its map point. Matches whose point is not in the map
// are skipped.
std::vector<Correspondence> to_correspondences(std::span<const Match2D3D> matches,
                                               const SemanticMap& map);

// Uniform-sampling P3P RANSAC with exactly temp_pose_iters hypotheses,
// refined on the best inlier set. nullopt when there are fewer than
// temp_pose_min_matches matches or fewer than four inliers.
std::optional<Pose> temporary_pose(std::span<const Match2D3D> matches, const SemanticMap& map,
                                   const CameraIntrinsics& camera, const LocalizerConfig& config,
                                   Rng& rng);

// Number of visible map points whose projection under pose lands on a query
// pixel carrying the same label. Off-raster projections and void pixels
// never count.
std::uint64_t semantic_score(const SemanticMap& map, const LabelRaster& query_labels,
                             const Pose& pose, const CameraIntrinsics& camera,
                             const LocalizerConfig& config);

struct ScoredCandidate {
  ImageId image_id = 0;
  std::vector<Match2D3D> matches;
  std::optional<Pose> temp_pose;
  std::uint64_t score = 0;  // 0 whenever temp_pose is empty
};

struct WeightedMatch {
  Match2D3D match;
  double p = 0.0;
};

struct WeightAssignment {
  std::vector<WeightedMatch> matches;
  bool used_fallback = false;
};

// Every match of candidate i carries raw weight score_i. Matches that share
// (query_kp, point3d) are merged in first-seen order with summed raw weights,
// then p = raw / total. When fewer than three merged matches have positive
// weight, a weighted minimal sample cannot be drawn and p becomes uniform
// with used_fallback set. uniform=true forces uniform p without the flag.
WeightAssignment assign_weights(std::span<const ScoredCandidate> candidates, bool uniform = false);

// Draws indices with probability proportional to non-negative weights.
class WeightedSampler {
 public:
  explicit WeightedSampler(std::span<const double> weights);

  std::size_t size() const { return cumulative_.size(); }
  double total() const { return total_; }
  // Number of indices with positive weight.
  std::size_t support() const { return support_; }

  std::size_t draw(Rng& rng) const;
  // Three distinct indices, sequentially without replacement. Requires
  // support() >= 3.
  std::array<std::size_t, 3> draw3(Rng& rng) const;

 private:
  double start(std::size_t i) const { return i == 0 ? 0.0 : cumulative_[i - 1]; }
  double weight(std::size_t i) const { return cumulative_[i] - start(i); }
  std::size_t locate(double x) const;

  std::vector<double> cumulative_;
  double total_ = 0.0;
  std::size_t support_ = 0;
};

struct RansacResult {
  std::optional<Pose> pose;
  std::size_t inliers = 0;
  std::size_t iterations = 0;
};

// Adaptive RANSAC: N = log(1 - confidence) / log(1 - w^3) with w the best
// inlier ratio so far, capped at ransac_max_iters. Weights only bias
// sampling; inliers are counted unweighted.
RansacResult weighted_ransac_pnp(std::span<const WeightedMatch> weighted, const SemanticMap& map,
                                 const CameraIntrinsics& camera, const LocalizerConfig& config,
                                 Rng& rng);

struct LocalizationResult {
  std::optional<Pose> pose;
  std::size_t inliers = 0;
  std::size_t total_matches = 0;  // after merging
  std::size_t iterations = 0;
  RankedCandidates retrieved;
  std::vector<ScoredCandidate> candidates;
  bool used_fallback = false;
};

// Full per-query pipeline: retrieval, matching, lifting, temporary poses,
// semantic scores, weights and the final weighted RANSAC. Every random
// stream is derived from seed, so the result is a pure function of its
// arguments.
LocalizationResult localize_query(const QueryData& query, const SemanticMap& map,
                                  const Dataset& database, const RetrievalConfig& retrieval,
                                  const LocalizerConfig& config, std::uint64_t seed);

}  // namespace semloc
