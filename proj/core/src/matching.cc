#include "semloc/matching.h"

#include <cmath>
#include <limits>

#include "semloc/errors.h"

namespace semloc {

double descriptor_distance(const float* a, const float* b, std::size_t dim) {
  double sq = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

std::vector<Match2D2D> knn_ratio_match(const DescriptorSet& query, const DescriptorSet& db,
                                       double ratio) {
  if (query.dim != db.dim) {
    throw DimMismatch("query descriptors have dim " + std::to_string(query.dim) +
                      ", database descriptors " + std::to_string(db.dim));
  }
  if (db.rows < 2) {
    throw TooFewDescriptors("ratio test needs at least two database descriptors, got " +
                            std::to_string(db.rows));
  }

  constexpr std::uint32_t kUnused = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> owner(db.rows, kUnused);
  std::vector<Match2D2D> candidate(query.rows);
  std::vector<bool> accepted(query.rows, false);

  for (std::uint32_t q = 0; q < query.rows; ++q) {
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = std::numeric_limits<double>::infinity();
    std::uint32_t best = 0;
    for (std::uint32_t j = 0; j < db.rows; ++j) {
      const double d = descriptor_distance(query.row(q), db.row(j), db.dim);
      if (d < d1) {
        d2 = d1;
        d1 = d;
        best = j;
      } else if (d < d2) {
        d2 = d;
      }
    }
    if (!(d1 < ratio * d2)) {
      continue;
    }
    candidate[q] = {q, best, d1};
    const std::uint32_t prev = owner[best];
    // Queries are visited in ascending order, so an equal d1 keeps the earlier one.
    if (prev == kUnused || d1 < candidate[prev].distance) {
      if (prev != kUnused) {
        accepted[prev] = false;
      }
      owner[best] = q;
      accepted[q] = true;
    }
  }

  std::vector<Match2D2D> out;
  for (std::uint32_t q = 0; q < query.rows; ++q) {
    if (accepted[q]) {
      out.push_back(candidate[q]);
    }
  }
  return out;
}

std::vector<Match2D3D> lift_matches(std::span<const Match2D2D> matches,
                                    std::span<const Eigen::Vector2d> query_keypoints,
                                    const DbImageRecord& db_image, const SemanticMap& map,
                                    ImageId retrieved_id) {
  std::vector<Match2D3D> out;
  out.reserve(matches.size());
  for (const Match2D2D& m : matches) {
    if (m.db_kp >= db_image.point3d_ids.size() || m.query_kp >= query_keypoints.size()) {
      continue;
    }
    const PointId pid = db_image.point3d_ids[m.db_kp];
    if (pid == kNoPoint || map.find(pid) == nullptr) {
      continue;
    }
    out.push_back({m.query_kp, query_keypoints[m.query_kp], pid, retrieved_id});
  }
  return out;
}

}  // namespace semloc
