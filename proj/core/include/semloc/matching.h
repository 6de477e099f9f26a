#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "semloc/model_io.h"
#include "semloc/semantic_map.h"

namespace semloc {

struct Match2D2D {
  std::uint32_t query_kp = 0;
  std::uint32_t db_kp = 0;
  double distance = 0.0;  // L2 to the nearest db descriptor

  bool operator==(const Match2D2D&) const = default;
};

struct Match2D3D {
  std::uint32_t query_kp = 0;
  Eigen::Vector2d query_px = Eigen::Vector2d::Zero();
  PointId point3d = 0;
  ImageId source_image = 0;

  bool operator==(const Match2D3D&) const = default;
};

// Euclidean distance between two descriptor rows, accumulated in double.
double descriptor_distance(const float* a, const float* b, std::size_t dim);

// Two-nearest-neighbour search with Lowe's ratio test, d1 < ratio * d2 on raw
// L2 distances. Each db descriptor is used at most once: on conflict the
// match with the smaller d1 survives (then the smaller query index).
// Result is ordered by query_kp. Throws DimMismatch or TooFewDescriptors
// (fewer than two db rows).
std::vector<Match2D2D> knn_ratio_match(const DescriptorSet& query, const DescriptorSet& db,
                                       double ratio);

// Keeps matches whose db keypoint is triangulated into a point still present
// in the map.
std::vector<Match2D3D> lift_matches(std::span<const Match2D2D> matches,
                                    std::span<const Eigen::Vector2d> query_keypoints,
                                    const DbImageRecord& db_image, const SemanticMap& map,
                                    ImageId retrieved_id);

}  // namespace semloc
