#pragma once

// On-disk inputs: COLMAP-style text SfM models, PGM label rasters, binary
// keypoint / descriptor / global-descriptor files and the small text
// sidecars (class table, condition tags, query intrinsics).

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "semloc/geometry.h"

namespace semloc {

using CameraId = std::uint32_t;
using ImageId = std::uint32_t;
using PointId = std::uint64_t;

inline constexpr PointId kNoPoint = std::numeric_limits<PointId>::max();

enum class Condition { kDay, kNight };

const char* to_string(Condition condition);
std::optional<Condition> parse_condition(const std::string& text);

struct TrackElement {
  ImageId image_id = 0;
  std::uint32_t point2d_idx = 0;

  bool operator==(const TrackElement&) const = default;
};

struct DbImageRecord {
  ImageId id = 0;
  std::string name;
  CameraId camera_id = 0;
  // World-to-camera rotation and translation as stored in images.txt.
  Eigen::Quaterniond qvec = Eigen::Quaterniond::Identity();
  Eigen::Vector3d tvec = Eigen::Vector3d::Zero();
  std::vector<Eigen::Vector2d> keypoints;
  // Parallel to keypoints; kNoPoint where the keypoint is not triangulated.
  std::vector<PointId> point3d_ids;
  // Filled from conditions.txt; absent when the sidecar has no entry.
  std::optional<Condition> condition;

  Pose pose() const { return Pose::from_quaternion(qvec, tvec); }

  bool operator==(const DbImageRecord& other) const;
};

struct RawPoint3D {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::vector<TrackElement> track;

  bool operator==(const RawPoint3D&) const = default;
};

struct SfmModel {
  std::map<CameraId, CameraIntrinsics> cameras;
  std::map<ImageId, DbImageRecord> images;
  std::map<PointId, RawPoint3D> points;

  // Throws ConsistencyError on dangling ids, asymmetric tracks, short tracks
  // or keypoints outside their image.
  void check_consistency() const;

  const DbImageRecord* find_image(const std::string& name) const;

  bool operator==(const SfmModel&) const = default;
};

// Parses cameras.txt, images.txt and points3D.txt from model_dir. Only the
// PINHOLE camera model is accepted.
SfmModel load_sfm_model(const std::filesystem::path& model_dir);
void write_sfm_model(const SfmModel& model, const std::filesystem::path& model_dir);

struct ClassTable {
  inline static constexpr std::uint8_t kVoidId = 255;

  std::vector<std::string> names;
  std::vector<bool> dynamic;  // parallel to names
  std::uint8_t void_id = kVoidId;

  std::size_t size() const { return names.size(); }
  bool is_valid_label(std::uint8_t id) const { return id < names.size() || id == void_id; }
  bool is_dynamic(std::uint8_t id) const { return id < dynamic.size() && dynamic[id]; }
  // Labels that may live in the semantic map.
  bool is_static(std::uint8_t id) const { return id < names.size() && !dynamic[id]; }

  // The 19 Cityscapes train ids with person/rider/car/truck/bus/train/
  // motorcycle/bicycle marked dynamic.
  static ClassTable cityscapes();

  bool operator==(const ClassTable&) const = default;
};

ClassTable load_class_table(const std::filesystem::path& path);
void write_class_table(const ClassTable& table, const std::filesystem::path& path);

struct LabelRaster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;  // row-major

  LabelRaster() = default;
  LabelRaster(int w, int h, std::uint8_t fill)
      : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }

  // Label of the pixel nearest to px, or nullopt if that pixel lies outside
  // the raster. Pixel (i, j) covers [i - 0.5, i + 0.5) x [j - 0.5, j + 0.5).
  std::optional<std::uint8_t> nearest(const Eigen::Vector2d& px) const;

  std::map<std::uint8_t, std::size_t> histogram() const;

  bool operator==(const LabelRaster&) const = default;
};

// Reads a binary P5 PGM with maxval 255. Throws DimensionMismatch when the
// size differs from expected_dims and UnknownLabel for ids outside the table.
LabelRaster load_label_raster(const std::filesystem::path& path, int expected_width,
                              int expected_height, const ClassTable& classes);
// Header-only read, used by validation.
std::pair<int, int> read_label_raster_dims(const std::filesystem::path& path);
void write_label_raster(const LabelRaster& raster, const std::filesystem::path& path);

struct DescriptorSet {
  std::uint32_t dim = 0;
  std::uint32_t rows = 0;
  std::vector<float> data;  // rows x dim, row-major

  const float* row(std::size_t i) const { return data.data() + i * dim; }
  float* row(std::size_t i) { return data.data() + i * dim; }

  bool operator==(const DescriptorSet&) const = default;
};

struct GlobalDescriptor {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  // Scales to unit L2 norm; vectors within 1e-6 of unit norm are kept as
  // they are. Throws std::invalid_argument on a zero vector.
  void normalize();

  bool operator==(const GlobalDescriptor&) const = default;
};

// "LDSC" u32 count u32 dim, then count*dim f32 (all little-endian).
DescriptorSet load_descriptors(const std::filesystem::path& path);
void write_descriptors(const DescriptorSet& set, const std::filesystem::path& path);

// "GDSC" u32 dim, then dim f32. Renormalized to unit length on load.
GlobalDescriptor load_global_descriptor(const std::filesystem::path& path);
void write_global_descriptor(const GlobalDescriptor& gd, const std::filesystem::path& path);

// "KPTS" u32 count, then count*(x, y) f32.
std::vector<Eigen::Vector2d> load_keypoints(const std::filesystem::path& path);
void write_keypoints(const std::vector<Eigen::Vector2d>& keypoints,
                     const std::filesystem::path& path);

struct BinaryHeader {
  std::uint32_t count = 0;  // 1 for GDSC
  std::uint32_t dim = 0;
};
// Reads and checks only the header of an LDSC, KPTS or GDSC file.
BinaryHeader read_binary_header(const std::filesystem::path& path, const char magic[4]);

// conditions.txt: "<image-name> <day|night>" per line.
std::map<std::string, Condition> load_conditions(const std::filesystem::path& path);
void write_conditions(const std::map<std::string, Condition>& conditions,
                      const std::filesystem::path& path);

struct QueryIntrinsics {
  std::string name;
  CameraIntrinsics camera;

  bool operator==(const QueryIntrinsics&) const = default;
};

// queries.txt: "<name> PINHOLE <w> <h> <fx> <fy> <cx> <cy>" per line.
std::vector<QueryIntrinsics> load_query_list(const std::filesystem::path& path);
void write_query_list(const std::vector<QueryIntrinsics>& queries,
                      const std::filesystem::path& path);

// Shortest text form that parses back to the identical double.
std::string format_double(double value);

}  // namespace semloc
