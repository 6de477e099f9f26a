#include "semloc/semantic_map.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

#include "semloc/errors.h"

namespace semloc {

SemanticMap::SemanticMap(std::vector<SemanticPoint> points, ClassTable classes)
    : points_(std::move(points)), classes_(std::move(classes)) {
  std::sort(points_.begin(), points_.end(),
            [](const SemanticPoint& a, const SemanticPoint& b) { return a.id < b.id; });
  index_.reserve(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!index_.emplace(points_[i].id, i).second) {
      throw ConsistencyError("duplicate semantic point id " + std::to_string(points_[i].id));
    }
  }
}

const SemanticPoint* SemanticMap::find(PointId id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? nullptr : &points_[it->second];
}

std::optional<std::uint8_t> vote_point_label(const RawPoint3D& point, const SfmModel& model,
                                             const std::map<ImageId, LabelRaster>& rasters,
                                             const ClassTable& classes) {
  std::map<std::uint8_t, std::size_t> votes;
  for (const TrackElement& el : point.track) {
    const auto raster = rasters.find(el.image_id);
    if (raster == rasters.end()) {
      throw ConsistencyError("no label raster for image " + std::to_string(el.image_id));
    }
    const DbImageRecord& image = model.images.at(el.image_id);
    const auto label = raster->second.nearest(image.keypoints.at(el.point2d_idx));
    if (!label || *label == classes.void_id) {
      continue;
    }
    ++votes[*label];
  }
  if (votes.empty()) {
    return std::nullopt;
  }
  // std::map iterates ids ascending, so the first maximum is the smallest id.
  auto winner = votes.begin();
  for (auto it = votes.begin(); it != votes.end(); ++it) {
    if (it->second > winner->second) {
      winner = it;
    }
  }
  if (!classes.is_static(winner->first)) {
    return std::nullopt;
  }
  return winner->first;
}

VisibilityStats compute_visibility_stats(const Eigen::Vector3d& point,
                                         std::span<const Eigen::Vector3d> camera_centers) {
  if (camera_centers.size() < 2) {
    throw std::invalid_argument("visibility statistics need at least two cameras");
  }
  std::vector<Eigen::Vector3d> dirs;
  dirs.reserve(camera_centers.size());
  VisibilityStats stats;
  stats.d_lower = std::numeric_limits<double>::infinity();
  stats.d_upper = 0.0;
  for (const Eigen::Vector3d& center : camera_centers) {
    const Eigen::Vector3d v = center - point;
    const double dist = v.norm();
    if (dist < 1e-9) {
      throw DegenerateGeometry("camera center coincides with the 3D point");
    }
    stats.d_lower = std::min(stats.d_lower, dist);
    stats.d_upper = std::max(stats.d_upper, dist);
    dirs.push_back(v / dist);
  }

  // Exhaustive search for the most widely separated pair; the first pair in
  // index order wins ties.
  std::size_t best_i = 0;
  std::size_t best_j = 1;
  double best_angle = -1.0;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    for (std::size_t j = i + 1; j < dirs.size(); ++j) {
      const double angle = angle_between(dirs[i], dirs[j]);
      if (angle > best_angle) {
        best_angle = angle;
        best_i = i;
        best_j = j;
      }
    }
  }
  stats.theta = std::clamp(best_angle, 0.0, std::numbers::pi);
  const Eigen::Vector3d sum = dirs[best_i] + dirs[best_j];
  const double sum_norm = sum.norm();
  // Opposite extremes have no bisector; any perpendicular direction does,
  // since the angle test with theta = pi accepts every direction anyway.
  stats.mean_direction = sum_norm > 1e-12 ? Eigen::Vector3d(sum / sum_norm)
                                          : Eigen::Vector3d(dirs[best_i].unitOrthogonal());
  return stats;
}

SemanticMap build_semantic_map(const SfmModel& model,
                               const std::map<ImageId, LabelRaster>& rasters,
                               const ClassTable& classes) {
  std::vector<SemanticPoint> points;
  points.reserve(model.points.size());
  for (const auto& [id, raw] : model.points) {
    const auto label = vote_point_label(raw, model, rasters, classes);
    if (!label) {
      continue;
    }
    std::vector<ImageId> image_ids;
    for (const TrackElement& el : raw.track) {
      image_ids.push_back(el.image_id);
    }
    std::sort(image_ids.begin(), image_ids.end());
    image_ids.erase(std::unique(image_ids.begin(), image_ids.end()), image_ids.end());
    if (image_ids.size() < 2) {
      continue;
    }
    std::vector<Eigen::Vector3d> centers;
    centers.reserve(image_ids.size());
    for (const ImageId img : image_ids) {
      centers.push_back(model.images.at(img).pose().center());
    }
    SemanticPoint sp;
    sp.id = id;
    sp.position = raw.position;
    sp.label = *label;
    sp.track_length = static_cast<std::uint32_t>(raw.track.size());
    try {
      sp.stats = compute_visibility_stats(raw.position, centers);
    } catch (const DegenerateGeometry&) {
      continue;
    }
    points.push_back(sp);
  }
  return SemanticMap(std::move(points), classes);
}

namespace {

constexpr char kMapMagic[4] = {'S', 'M', 'A', 'P'};
constexpr std::uint32_t kMapVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) {
    bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  }
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> bytes, std::string file)
      : bytes_(std::move(bytes)), file_(std::move(file)) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  void magic(const char m[4]) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) {
      throw BadMagic(file_ + ": not a semantic map cache");
    }
    pos_ += 4;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw TruncatedFile(file_ + ": map cache is truncated");
    }
  }

  std::vector<unsigned char> bytes_;
  std::string file_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_semantic_map(const SemanticMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out.write(kMapMagic, 4);
  put_u64(out, kMapVersion);
  put_u64(out, map.classes().size());
  put_u64(out, map.size());
  for (const SemanticPoint& p : map.points()) {
    put_u64(out, p.id);
    for (int k = 0; k < 3; ++k) put_f64(out, p.position(k));
    out.put(static_cast<char>(p.label));
    put_f64(out, p.stats.d_lower);
    put_f64(out, p.stats.d_upper);
    for (int k = 0; k < 3; ++k) put_f64(out, p.stats.mean_direction(k));
    put_f64(out, p.stats.theta);
    put_u64(out, p.track_length);
  }
}

SemanticMap load_semantic_map(const std::filesystem::path& path, const ClassTable& classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError(path.string(), "cannot open file");
  }
  ByteReader r(std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {}), path.string());
  r.magic(kMapMagic);
  if (r.u64() != kMapVersion) {
    throw ParseError(path.string(), "unsupported map cache version");
  }
  if (r.u64() != classes.size()) {
    throw ConsistencyError(path.string() + ": map cache was built with a different class table");
  }
  const std::uint64_t n = r.u64();
  std::vector<SemanticPoint> points;
  points.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    SemanticPoint p;
    p.id = r.u64();
    for (int k = 0; k < 3; ++k) p.position(k) = r.f64();
    p.label = r.u8();
    p.stats.d_lower = r.f64();
    p.stats.d_upper = r.f64();
    for (int k = 0; k < 3; ++k) p.stats.mean_direction(k) = r.f64();
    p.stats.theta = r.f64();
    p.track_length = static_cast<std::uint32_t>(r.u64());
    if (!classes.is_static(p.label)) {
      throw ConsistencyError(path.string() + ": cached point has a non-static label");
    }
    points.push_back(p);
  }
  if (!r.at_end()) {
    throw ParseError(path.string(), "trailing bytes after map cache");
  }
  return SemanticMap(std::move(points), classes);
}

}  // namespace semloc
