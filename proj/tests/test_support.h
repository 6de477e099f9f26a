#pragma once

// Helpers shared by the unit and acceptance suites: random instance
// generators and the independent brute-force oracles that the library
// results are checked against. Nothing here calls into the code path it
// is used to verify.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "semloc/geometry.h"
#include "semloc/random.h"

namespace semloc::testing {

CameraIntrinsics test_camera();

Eigen::Matrix3d random_rotation(Rng& rng);

// Rotation about `axis` by `degrees`.
Eigen::Matrix3d rotation_about(const Eigen::Vector3d& axis, double degrees);

// Camera at `center` looking at `target` with world +z as the up hint.
Pose look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target);

// Random pose with camera center inside a 10 m cube.
Pose random_pose(Rng& rng);

// Point in front of `pose` whose projection lands inside `camera`, at depth
// in [min_depth, max_depth].
Eigen::Vector3d random_visible_point(Rng& rng, const Pose& pose, const CameraIntrinsics& camera,
                                     double min_depth = 2.0, double max_depth = 10.0);

// Projection through the explicit 3x4 matrix K [R | t].
std::optional<Eigen::Vector2d> project_homogeneous(const Pose& pose, const CameraIntrinsics& camera,
                                                   const Eigen::Vector3d& point);

// Rotation angle between two rotation matrices via the quaternion route.
double rotation_angle_rad(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

// Fresh empty directory under the system temp dir.
std::filesystem::path make_temp_dir(const std::string& tag);

}  // namespace semloc::testing

#include "semloc/localizer.h"
#include "semloc/semantic_map.h"

namespace semloc::testing {

// Matches drawn from two rigidly consistent groups: `gt_count` points seen
// by the ground-truth pose and `decoy_count` points seen by a decoy pose
// displaced by several metres. The map gives every point a wide viewing cone.
struct TwoClusterScenario {
  CameraIntrinsics camera;
  Pose gt;
  Pose decoy;
  SemanticMap map;
  std::vector<Match2D3D> gt_matches;
  std::vector<Match2D3D> decoy_matches;
};

TwoClusterScenario make_two_cluster(std::uint64_t seed, std::size_t gt_count,
                                    std::size_t decoy_count);

// Weighted matches with total weight gt_mass spread evenly over the
// ground-truth group and the rest over the decoy group.
std::vector<WeightedMatch> weigh_clusters(const TwoClusterScenario& s, double gt_mass);

}  // namespace semloc::testing
