#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "semloc/geometry.h"
#include "semloc/model_io.h"

namespace semloc {

// Distance band and viewing cone of a 3D point, derived from the database
// cameras that observe it.
struct VisibilityStats {
  double d_lower = 0.0;
  double d_upper = 0.0;
  // Unit bisector of the two most widely separated viewing directions.
  Eigen::Vector3d mean_direction = Eigen::Vector3d::UnitZ();
  // Angle between those two directions, radians in [0, pi].
  double theta = 0.0;

  bool operator==(const VisibilityStats&) const = default;
};

struct SemanticPoint {
  PointId id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::uint8_t label = 0;
  VisibilityStats stats;
  std::uint32_t track_length = 0;

  bool operator==(const SemanticPoint&) const = default;
};

// Labeled, dynamic-free point cloud. Immutable after construction.
class SemanticMap {
 public:
  SemanticMap() = default;
  SemanticMap(std::vector<SemanticPoint> points, ClassTable classes);

  const std::vector<SemanticPoint>& points() const { return points_; }
  const ClassTable& classes() const { return classes_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  // nullptr when the point was pruned or never existed.
  const SemanticPoint* find(PointId id) const;

  bool operator==(const SemanticMap& other) const {
    return points_ == other.points_ && classes_ == other.classes_;
  }

 private:
  std::vector<SemanticPoint> points_;  // sorted by id
  ClassTable classes_;
  std::unordered_map<PointId, std::size_t> index_;
};

// Majority label over the track's raster lookups at the observing keypoints
// (nearest pixel). Void votes are discarded; ties go to the smaller class id.
// Returns nullopt (point removed) for a dynamic or all-void outcome.
// Throws ConsistencyError if a track image has no raster.
std::optional<std::uint8_t> vote_point_label(const RawPoint3D& point, const SfmModel& model,
                                             const std::map<ImageId, LabelRaster>& rasters,
                                             const ClassTable& classes);

// Requires at least two camera centers. Throws DegenerateGeometry when a
// center lies within 1e-9 m of the point.
VisibilityStats compute_visibility_stats(const Eigen::Vector3d& point,
                                         std::span<const Eigen::Vector3d> camera_centers);

SemanticMap build_semantic_map(const SfmModel& model,
                               const std::map<ImageId, LabelRaster>& rasters,
                               const ClassTable& classes);

// Binary cache ("SMAP" v1, little-endian). Round-trips exactly.
void save_semantic_map(const SemanticMap& map, const std::filesystem::path& path);
SemanticMap load_semantic_map(const std::filesystem::path& path, const ClassTable& classes);

}  // namespace semloc
