#include "semloc/localizer.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "semloc/errors.h"

namespace semloc {

void LocalizerConfig::validate() const {
  const auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (!(theta_min > 0.0) || theta_min > std::numbers::pi) fail("theta_min must be in (0, pi]");
  if (!(inlier_px > 0.0)) fail("inlier_px must be positive");
  if (!(ransac_confidence > 0.0 && ransac_confidence < 1.0)) {
    fail("ransac_confidence must be in (0, 1)");
  }
  if (ransac_max_iters == 0) fail("ransac_max_iters must be positive");
  if (temp_pose_min_matches == 0) fail("temp_pose_min_matches must be positive");
  if (temp_pose_iters == 0) fail("temp_pose_iters must be positive");
  if (!(ratio > 0.0 && ratio <= 1.0)) fail("ratio must be in (0, 1]");
}

bool visible(const SemanticPoint& point, const Eigen::Vector3d& query_center, double theta_min) {
  const Eigen::Vector3d v = query_center - point.position;
  const double dist = v.norm();
  if (dist < 1e-9) {
    return false;
  }
  if (dist < point.stats.d_lower || dist > point.stats.d_upper) {
    return false;
  }
  return angle_between(v, point.stats.mean_direction) <= std::max(point.stats.theta, theta_min);
}

std::vector<Correspondence> to_correspondences(std::span<const Match2D3D> matches,
                                               const SemanticMap& map) {
  std::vector<Correspondence> corrs;
  corrs.reserve(matches.size());
  for (const Match2D3D& m : matches) {
    if (const SemanticPoint* p = map.find(m.point3d)) {
      corrs.push_back({m.query_px, p->position});
    }
  }
  return corrs;
}

namespace {

bool is_inlier(const Correspondence& c, const CameraIntrinsics& camera, const Pose& pose,
               double threshold) {
  const auto px = project(pose, camera, c.point);
  return px && (*px - c.pixel).norm() <= threshold;
}

std::size_t count_inliers(std::span<const Correspondence> corrs, const CameraIntrinsics& camera,
                          const Pose& pose, double threshold) {
  std::size_t n = 0;
  for (const Correspondence& c : corrs) {
    n += is_inlier(c, camera, pose, threshold) ? 1 : 0;
  }
  return n;
}

std::vector<Correspondence> inlier_set(std::span<const Correspondence> corrs,
                                       const CameraIntrinsics& camera, const Pose& pose,
                                       double threshold) {
  std::vector<Correspondence> out;
  for (const Correspondence& c : corrs) {
    if (is_inlier(c, camera, pose, threshold)) out.push_back(c);
  }
  return out;
}

// Hypothesise-and-verify loop shared by the temporary pose and the final
// estimate. draw() yields three indices into corrs; bound(best_inliers)
// returns the current iteration budget.
template <typename Draw, typename Bound>
RansacResult run_ransac(std::span<const Correspondence> corrs, const CameraIntrinsics& camera,
                        double threshold, Draw&& draw, Bound&& bound) {
  RansacResult result;
  std::optional<Pose> best;
  std::size_t best_inliers = 0;
  std::size_t budget = bound(0);
  std::size_t it = 0;
  for (; it < budget; ++it) {
    const std::array<std::size_t, 3> idx = draw();
    const std::array<Correspondence, 3> sample = {corrs[idx[0]], corrs[idx[1]], corrs[idx[2]]};
    for (const Pose& pose : solve_p3p_noexcept(sample, camera)) {
      const std::size_t n = count_inliers(corrs, camera, pose, threshold);
      if (n > best_inliers) {
        best_inliers = n;
        best = pose;
        budget = std::max(it + 1, std::min(budget, bound(n)));
      }
    }
  }
  result.iterations = it;
  if (!best || best_inliers < 4) {
    return result;
  }

  Pose pose = *best;
  std::size_t inliers = best_inliers;
  // Two refinement passes; the second picks up points that moved inside the
  // threshold after the first.
  for (int pass = 0; pass < 2; ++pass) {
    const std::vector<Correspondence> support = inlier_set(corrs, camera, pose, threshold);
    if (support.size() < 4) break;
    try {
      const Pose refined = refine_pnp(support, camera, pose);
      const std::size_t n = count_inliers(corrs, camera, refined, threshold);
      if (n < 4) break;
      pose = refined;
      inliers = n;
    } catch (const NumericalFailure&) {
      break;
    }
  }
  result.pose = pose;
  result.inliers = inliers;
  return result;
}

std::array<std::size_t, 3> uniform_triple(Rng& rng, std::size_t n) {
  std::array<std::size_t, 3> idx{};
  idx[0] = rng.uniform_index(n);
  do {
    idx[1] = rng.uniform_index(n);
  } while (idx[1] == idx[0]);
  do {
    idx[2] = rng.uniform_index(n);
  } while (idx[2] == idx[0] || idx[2] == idx[1]);
  return idx;
}

}  // namespace

std::optional<Pose> temporary_pose(std::span<const Match2D3D> matches, const SemanticMap& map,
                                   const CameraIntrinsics& camera, const LocalizerConfig& config,
                                   Rng& rng) {
  if (matches.size() < config.temp_pose_min_matches) {
    return std::nullopt;
  }
  const std::vector<Correspondence> corrs = to_correspondences(matches, map);
  if (corrs.size() < 4) {
    return std::nullopt;
  }
  const RansacResult r = run_ransac(
      corrs, camera, config.inlier_px, [&] { return uniform_triple(rng, corrs.size()); },
      [&](std::size_t) { return config.temp_pose_iters; });
  return r.pose;
}

std::uint64_t semantic_score(const SemanticMap& map, const LabelRaster& query_labels,
                             const Pose& pose, const CameraIntrinsics& camera,
                             const LocalizerConfig& config) {
  const Eigen::Vector3d center = pose.center();
  const std::uint8_t void_id = map.classes().void_id;
  std::uint64_t score = 0;
  for (const SemanticPoint& p : map.points()) {
    if (!visible(p, center, config.theta_min)) continue;
    const auto px = project(pose, camera, p.position);
    if (!px) continue;
    const auto label = query_labels.nearest(*px);
    if (!label || *label == void_id) continue;
    score += *label == p.label ? 1 : 0;
  }
  return score;
}

WeightAssignment assign_weights(std::span<const ScoredCandidate> candidates, bool uniform) {
  // Raw weights stay integral so that scaling every score by a constant
  // reproduces p bit for bit.
  std::vector<Match2D3D> merged;
  std::vector<std::uint64_t> raw;
  std::map<std::pair<std::uint32_t, PointId>, std::size_t> slot;
  for (const ScoredCandidate& c : candidates) {
    for (const Match2D3D& m : c.matches) {
      const auto [it, inserted] = slot.try_emplace({m.query_kp, m.point3d}, merged.size());
      if (inserted) {
        merged.push_back(m);
        raw.push_back(c.score);
      } else {
        raw[it->second] += c.score;
      }
    }
  }

  WeightAssignment out;
  out.matches.reserve(merged.size());
  const std::size_t positive =
      static_cast<std::size_t>(std::count_if(raw.begin(), raw.end(), [](auto w) { return w > 0; }));
  if (!uniform && positive < 3 && !merged.empty()) {
    out.used_fallback = true;
  }
  if (uniform || out.used_fallback) {
    const double p = 1.0 / static_cast<double>(merged.size());
    for (const Match2D3D& m : merged) out.matches.push_back({m, p});
    return out;
  }
  std::uint64_t total = 0;
  for (const std::uint64_t w : raw) total += w;
  for (std::size_t i = 0; i < merged.size(); ++i) {
    out.matches.push_back({merged[i], static_cast<double>(raw[i]) / static_cast<double>(total)});
  }
  return out;
}

WeightedSampler::WeightedSampler(std::span<const double> weights) {
  cumulative_.reserve(weights.size());
  for (const double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("sampling weights must be finite and non-negative");
    }
    total_ += w;
    cumulative_.push_back(total_);
    support_ += w > 0.0 ? 1 : 0;
  }
}

std::size_t WeightedSampler::locate(double x) const {
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), x);
  return static_cast<std::size_t>(it - cumulative_.begin());
}

std::size_t WeightedSampler::draw(Rng& rng) const {
  if (support_ == 0) {
    throw std::logic_error("cannot sample from an all-zero weight vector");
  }
  for (;;) {
    const std::size_t i = locate(rng.uniform01() * total_);
    // Rounding can push x onto the closing edge; redraw in that case.
    if (i < cumulative_.size() && weight(i) > 0.0) return i;
  }
}

std::array<std::size_t, 3> WeightedSampler::draw3(Rng& rng) const {
  if (support_ < 3) {
    throw std::logic_error("need at least three positive weights for a minimal sample");
  }
  std::array<std::size_t, 3> out{};
  std::vector<std::size_t> removed;  // kept sorted by position
  for (std::size_t k = 0; k < 3; ++k) {
    double remaining = total_;
    for (const std::size_t r : removed) remaining -= weight(r);
    for (;;) {
      // Sample on the line with the removed intervals cut out, then map the
      // point back by skipping over them from left to right.
      double x = rng.uniform01() * remaining;
      for (const std::size_t r : removed) {
        if (x >= start(r)) x += weight(r);
      }
      const std::size_t i = locate(x);
      if (i < cumulative_.size() && weight(i) > 0.0 &&
          std::find(removed.begin(), removed.end(), i) == removed.end()) {
        out[k] = i;
        removed.insert(std::upper_bound(removed.begin(), removed.end(), i), i);
        break;
      }
    }
  }
  return out;
}

RansacResult weighted_ransac_pnp(std::span<const WeightedMatch> weighted, const SemanticMap& map,
                                 const CameraIntrinsics& camera, const LocalizerConfig& config,
                                 Rng& rng) {
  std::vector<Correspondence> corrs;
  std::vector<double> weights;
  corrs.reserve(weighted.size());
  weights.reserve(weighted.size());
  for (const WeightedMatch& wm : weighted) {
    if (const SemanticPoint* p = map.find(wm.match.point3d)) {
      corrs.push_back({wm.match.query_px, p->position});
      weights.push_back(wm.p);
    }
  }
  if (corrs.size() < 4) {
    return {};
  }
  WeightedSampler sampler(weights);
  if (sampler.support() < 3) {
    return {};
  }
  const double n = static_cast<double>(corrs.size());
  const auto bound = [&](std::size_t best_inliers) -> std::size_t {
    const double w = static_cast<double>(best_inliers) / n;
    const double w3 = w * w * w;
    if (w3 <= 0.0) return config.ransac_max_iters;
    if (w3 >= 1.0) return 0;
    const double needed = std::ceil(std::log(1.0 - config.ransac_confidence) / std::log1p(-w3));
    if (!std::isfinite(needed) || needed >= static_cast<double>(config.ransac_max_iters)) {
      return config.ransac_max_iters;
    }
    return static_cast<std::size_t>(std::max(needed, 1.0));
  };
  return run_ransac(
      corrs, camera, config.inlier_px, [&] { return sampler.draw3(rng); }, bound);
}

LocalizationResult localize_query(const QueryData& query, const SemanticMap& map,
                                  const Dataset& database, const RetrievalConfig& retrieval,
                                  const LocalizerConfig& config, std::uint64_t seed) {
  LocalizationResult result;
  result.retrieved =
      rank_database(query.global, database.db_globals, retrieval.k_for(query.condition));

  result.candidates.reserve(result.retrieved.size());
  for (const RankedCandidate& rc : result.retrieved) {
    ScoredCandidate cand;
    cand.image_id = rc.image_id;
    const DbImageRecord& image = database.model.images.at(rc.image_id);
    const DescriptorSet& db_descs = database.db_descriptors.at(rc.image_id);
    if (db_descs.rows >= 2 && query.descriptors.rows > 0) {
      const auto matches = knn_ratio_match(query.descriptors, db_descs, config.ratio);
      cand.matches = lift_matches(matches, query.keypoints, image, map, rc.image_id);
    }
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(rc.image_id) + 1));
    cand.temp_pose = temporary_pose(cand.matches, map, query.camera, config, rng);
    if (cand.temp_pose) {
      cand.score = semantic_score(map, query.labels, *cand.temp_pose, query.camera, config);
    }
    result.candidates.push_back(std::move(cand));
  }

  const WeightAssignment weights = assign_weights(result.candidates, config.uniform_weights);
  result.used_fallback = weights.used_fallback;
  result.total_matches = weights.matches.size();
  Rng rng(mix_seed(seed, 0));
  const RansacResult r = weighted_ransac_pnp(weights.matches, map, query.camera, config, rng);
  result.pose = r.pose;
  result.inliers = r.inliers;
  result.iterations = r.iterations;
  return result;
}

}  // namespace semloc
