#pragma once

// Synthetic, fully ground-truthed localization scenes.
//
// Points are scattered in a cube centred on the origin, each with a random
// horizontal surface normal; a camera observes a point when the point lies
// inside the image and the camera sits within 60 degrees of the normal.
// Database cameras stand on a horizontal ring around the cube and look at
// its centre. Labels come from the octant of the point, and a fraction of
// points is labelled with a dynamic class.
//
// An optional twin site is an exact copy of the scene translated by
// twin_offset, with its own database ring, identical local descriptors and
// permuted labels. It yields look-alike images whose geometry is
// self-consistent but semantically wrong for every query.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "semloc/dataset.h"
#include "semloc/geometry.h"

namespace semloc {

struct SceneSpec {
  std::size_t n_points = 500;
  std::size_t n_db_images = 20;
  std::size_t n_queries = 10;
  double extent = 10.0;       // side of the point cube, metres
  double ring_radius = 20.0;  // database camera ring, metres
  std::uint32_t descriptor_dim = 32;
  // 0 selects the number of database images (the minimum).
  std::uint32_t global_dim = 0;
  double pixel_noise = 0.0;        // keypoint sigma, px
  double observation_noise = 0.02;  // per-component descriptor sigma
  std::size_t clutter_keypoints = 30;
  double dynamic_fraction = 0.0;
  double night_fraction = 0.0;
  double twin_offset = 0.0;  // metres along +x; 0 disables the twin site
  // Class id per octant index (x > 0) + 2 (y > 0) + 4 (z > 0).
  std::array<std::uint8_t, 8> octant_labels = {0, 1, 2, 3, 4, 5, 6, 7};
  std::uint8_t dynamic_label = 13;
  CameraIntrinsics camera{500.0, 500.0, 320.0, 240.0, 640, 480};
  std::uint64_t seed = 0;

  // Throws InfeasibleSpec.
  void validate() const;
};

struct CorruptionSpec {
  double wrong_retrieval_rate = 0.0;
  double descriptor_noise = 0.0;
  double label_flip_rate = 0.0;
  double outlier_match_rate = 0.0;
  // Retrieval depth the wrong-retrieval channel is aimed at.
  std::size_t k = 10;

  void validate() const;
  bool operator==(const CorruptionSpec&) const = default;
};

struct SyntheticScene {
  SceneSpec spec;
  Dataset dataset;
  std::map<std::string, Pose> ground_truth;  // world-to-camera, by query name
  // Parallel to each query's keypoints; kNoPoint marks clutter.
  std::vector<std::vector<PointId>> query_point_ids;
  std::vector<ImageId> twin_images;
  std::map<PointId, std::uint8_t> point_labels;  // true label of every point
};

struct QueryCorruption {
  std::string name;
  std::vector<ImageId> forced_far;  // far images placed in the top k
  std::vector<std::uint32_t> outlier_keypoints;
  std::size_t flipped_pixels = 0;
};

struct CorruptionRecord {
  CorruptionSpec spec;
  std::uint64_t seed = 0;
  std::vector<QueryCorruption> queries;
};

// Camera at center looking at target, image y pointing away from world +z.
Pose look_at_pose(const Eigen::Vector3d& center, const Eigen::Vector3d& target);

// Throws InfeasibleSpec when the spec is invalid or a point or query cannot
// be placed with enough observations.
SyntheticScene generate_scene(const SceneSpec& spec);

// Applies each channel independently and in place.
//  - wrong retrieval: the round(rate * k) best true candidates are replaced
//    in the top k by far images (farthest half of the database), each the
//    far image whose optical axis best matches the one it replaces;
//  - descriptor noise: Gaussian sigma added to every query descriptor value;
//  - label flips: exactly round(rate * pixels) query raster pixels change to
//    a different class;
//  - outliers: exactly round(rate * n) point-bearing query keypoints move to
//    random pixels at least 50 px from where they were.
CorruptionRecord corrupt(SyntheticScene& scene, const CorruptionSpec& corruption,
                         std::uint64_t seed);

// Dataset files plus ground_truth.txt.
void write_scene(const SyntheticScene& scene, const std::filesystem::path& root);
void write_corruption_record(const CorruptionRecord& record, const std::filesystem::path& path);

}  // namespace semloc
