#include "semloc/synth.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <nlohmann/json.hpp>

#include "semloc/errors.h"
#include "semloc/evaluation.h"
#include "semloc/random.h"

namespace semloc {

namespace {

constexpr double kViewCone = 60.0 * std::numbers::pi / 180.0;
constexpr double kBorder = 2.0;
constexpr int kSplatRadius = 3;
constexpr std::size_t kMaxAttempts = 1000;
constexpr std::size_t kMinQueryPoints = 20;
constexpr double kOutlierMinShift = 50.0;

struct ScenePoint {
  Eigen::Vector3d position;
  Eigen::Vector3d normal;
  std::uint8_t label = 0;
  std::uint8_t twin_label = 0;
  std::vector<float> descriptor;
};

struct Splat {
  double depth;
  Eigen::Vector2d px;
  std::uint8_t label;
};

std::optional<Eigen::Vector2d> observe(const Pose& pose, const CameraIntrinsics& cam,
                                       const Eigen::Vector3d& position,
                                       const Eigen::Vector3d& normal) {
  if (angle_between(pose.center() - position, normal) > kViewCone) {
    return std::nullopt;
  }
  const auto px = project(pose, cam, position);
  if (!px || px->x() < kBorder || px->y() < kBorder || px->x() >= cam.width - kBorder ||
      px->y() >= cam.height - kBorder) {
    return std::nullopt;
  }
  return px;
}

Eigen::Vector2d noisy(const Eigen::Vector2d& px, double sigma, const CameraIntrinsics& cam,
                      Rng& rng) {
  if (sigma <= 0.0) return px;
  const double x = px.x() + rng.normal(0.0, sigma);
  const double y = px.y() + rng.normal(0.0, sigma);
  return {std::clamp(x, 0.0, cam.width - 1e-6), std::clamp(y, 0.0, cam.height - 1e-6)};
}

// Query keypoints are stored as f32; keep them exactly representable and
// inside the image after rounding.
Eigen::Vector2d as_stored(const Eigen::Vector2d& px, const CameraIntrinsics& cam) {
  const float max_x = std::nextafter(static_cast<float>(cam.width), 0.0f);
  const float max_y = std::nextafter(static_cast<float>(cam.height), 0.0f);
  return {std::min(static_cast<float>(px.x()), max_x), std::min(static_cast<float>(px.y()), max_y)};
}

std::vector<float> random_unit(std::uint32_t dim, Rng& rng) {
  std::vector<float> v(dim);
  double norm = 0.0;
  std::vector<double> tmp(dim);
  for (double& x : tmp) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (std::uint32_t i = 0; i < dim; ++i) v[i] = static_cast<float>(tmp[i] / norm);
  return v;
}

void append_descriptor(DescriptorSet& set, const std::vector<float>& base, double sigma,
                       Rng& rng) {
  for (const float x : base) {
    set.data.push_back(sigma > 0.0 ? static_cast<float>(x + rng.normal(0.0, sigma)) : x);
  }
  ++set.rows;
}

LabelRaster render(const CameraIntrinsics& cam, std::vector<Splat> splats, std::uint8_t void_id) {
  LabelRaster raster(cam.width, cam.height, void_id);
  std::stable_sort(splats.begin(), splats.end(),
                   [](const Splat& a, const Splat& b) { return a.depth > b.depth; });
  const auto stamp_disk = [&](const Splat& s) {
    const int x0 = static_cast<int>(std::floor(s.px.x() + 0.5));
    const int y0 = static_cast<int>(std::floor(s.px.y() + 0.5));
    for (int y = y0 - kSplatRadius; y <= y0 + kSplatRadius; ++y) {
      for (int x = x0 - kSplatRadius; x <= x0 + kSplatRadius; ++x) {
        if (x < 0 || y < 0 || x >= cam.width || y >= cam.height) continue;
        const double dx = x - s.px.x();
        const double dy = y - s.px.y();
        if (dx * dx + dy * dy <= kSplatRadius * kSplatRadius) raster.at(x, y) = s.label;
      }
    }
  };
  for (const Splat& s : splats) stamp_disk(s);
  // Each keypoint keeps its own label at its nearest pixel, nearer points
  // winning shared pixels.
  for (const Splat& s : splats) {
    const int x = static_cast<int>(std::floor(s.px.x() + 0.5));
    const int y = static_cast<int>(std::floor(s.px.y() + 0.5));
    if (x >= 0 && y >= 0 && x < cam.width && y < cam.height) raster.at(x, y) = s.label;
  }
  return raster;
}

int octant(const Eigen::Vector3d& p) {
  return (p.x() > 0 ? 1 : 0) + (p.y() > 0 ? 2 : 0) + (p.z() > 0 ? 4 : 0);
}

GlobalDescriptor ranking_descriptor(const std::vector<ImageId>& order, std::uint32_t dim) {
  // Database descriptors are one-hot at index id - 1, so the L2 distance to
  // image L[r] is sqrt(2 - 2 q_r) and decreasing q reproduces the order.
  GlobalDescriptor gd;
  gd.values.assign(dim, 0.0f);
  const auto n = static_cast<double>(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    gd.values[order[r] - 1] = static_cast<float>(n - static_cast<double>(r));
  }
  gd.normalize();
  return gd;
}

std::vector<ImageId> order_by_distance(const SfmModel& model, const Eigen::Vector3d& center) {
  std::vector<std::pair<double, ImageId>> d;
  for (const auto& [id, image] : model.images) {
    d.emplace_back((image.pose().center() - center).norm(), id);
  }
  std::sort(d.begin(), d.end());
  std::vector<ImageId> out;
  for (const auto& [dist, id] : d) out.push_back(id);
  return out;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw InfeasibleSpec(what);
}

bool in_unit_range(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

Pose look_at_pose(const Eigen::Vector3d& center, const Eigen::Vector3d& target) {
  const Eigen::Vector3d z = (target - center).normalized();
  Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
  if (std::abs(z.dot(up)) > 0.999) up = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d x = z.cross(up).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Pose pose;
  pose.rotation.row(0) = x.transpose();
  pose.rotation.row(1) = y.transpose();
  pose.rotation.row(2) = z.transpose();
  pose.translation = -pose.rotation * center;
  return pose;
}

void SceneSpec::validate() const {
  require(n_points > 0 && n_db_images >= 2 && n_queries > 0,
          "scene needs points, at least two database images and a query");
  require(extent > 0.0, "extent must be positive");
  require(ring_radius > extent, "camera ring must lie outside the point cube");
  require(descriptor_dim > 0, "descriptor_dim must be positive");
  require(pixel_noise >= 0.0 && observation_noise >= 0.0, "noise must be non-negative");
  require(in_unit_range(dynamic_fraction) && in_unit_range(night_fraction),
          "fractions must be in [0, 1]");
  require(twin_offset == 0.0 || twin_offset > 2.0 * (ring_radius + extent),
          "twin site must not overlap the scene");
  const ClassTable classes = ClassTable::cityscapes();
  for (const std::uint8_t l : octant_labels) {
    require(classes.is_static(l), "octant labels must be static classes");
  }
  if (twin_offset > 0.0) {
    const std::set<std::uint8_t> distinct(octant_labels.begin(), octant_labels.end());
    require(distinct.size() == 8, "a twin site needs eight distinct octant labels");
  }
  require(classes.is_dynamic(dynamic_label), "dynamic_label must be a dynamic class");
  try {
    camera.validate();
  } catch (const Error& e) {
    throw InfeasibleSpec(e.what());
  }
}

void CorruptionSpec::validate() const {
  require(in_unit_range(wrong_retrieval_rate) && in_unit_range(label_flip_rate) &&
              in_unit_range(outlier_match_rate),
          "corruption rates must be in [0, 1]");
  require(descriptor_noise >= 0.0, "descriptor_noise must be non-negative");
  require(k > 0, "corruption k must be positive");
}

SyntheticScene generate_scene(const SceneSpec& spec) {
  spec.validate();
  const bool twin = spec.twin_offset > 0.0;
  const Eigen::Vector3d offset(spec.twin_offset, 0.0, 0.0);
  const CameraIntrinsics& cam = spec.camera;

  SyntheticScene scene;
  scene.spec = spec;
  Dataset& ds = scene.dataset;
  ds.classes = ClassTable::cityscapes();
  ds.model.cameras[1] = cam;

  const std::size_t n_db = spec.n_db_images;
  std::vector<Pose> ring;
  for (std::size_t j = 0; j < n_db; ++j) {
    const double phi = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n_db);
    ring.push_back(look_at_pose(
        {spec.ring_radius * std::cos(phi), spec.ring_radius * std::sin(phi), 0.0},
        Eigen::Vector3d::Zero()));
  }

  Rng point_rng(mix_seed(spec.seed, 1));
  Rng desc_rng(mix_seed(spec.seed, 2));
  std::vector<ScenePoint> points(spec.n_points);
  const double half = spec.extent / 2.0;
  for (std::size_t i = 0; i < spec.n_points; ++i) {
    ScenePoint& p = points[i];
    std::size_t attempt = 0;
    for (;; ++attempt) {
      require(attempt < kMaxAttempts,
              "cannot place point " + std::to_string(i) + " in view of two database cameras");
      p.position = {point_rng.uniform(-half, half), point_rng.uniform(-half, half),
                    point_rng.uniform(-half, half)};
      const double a = point_rng.uniform(0.0, 2.0 * std::numbers::pi);
      p.normal = {std::cos(a), std::sin(a), 0.0};
      std::size_t seen = 0;
      for (const Pose& pose : ring) seen += observe(pose, cam, p.position, p.normal) ? 1 : 0;
      if (seen >= 2) break;
    }
    const int o = octant(p.position);
    const bool dynamic = point_rng.uniform01() < spec.dynamic_fraction;
    p.label = dynamic ? spec.dynamic_label : spec.octant_labels[o];
    p.twin_label = dynamic ? spec.dynamic_label : spec.octant_labels[(o + 1) % 8];
    p.descriptor = random_unit(spec.descriptor_dim, desc_rng);
  }
  for (std::size_t i = 0; i < spec.n_points; ++i) {
    scene.point_labels[static_cast<PointId>(i + 1)] = points[i].label;
    if (twin) scene.point_labels[static_cast<PointId>(i + 1 + spec.n_points)] = points[i].twin_label;
  }

  const auto point_id = [&](std::size_t i, bool twin_copy) -> PointId {
    return static_cast<PointId>(i + 1 + (twin_copy ? spec.n_points : 0));
  };
  for (std::size_t i = 0; i < spec.n_points; ++i) {
    ds.model.points[point_id(i, false)].position = points[i].position;
    if (twin) ds.model.points[point_id(i, true)].position = points[i].position + offset;
  }

  Rng obs_rng(mix_seed(spec.seed, 3));
  const std::size_t n_total = twin ? 2 * n_db : n_db;
  const std::uint32_t global_dim =
      spec.global_dim == 0 ? static_cast<std::uint32_t>(n_total) : spec.global_dim;
  require(global_dim >= n_total, "global_dim must be at least the number of database images");

  char name_buf[32];
  for (std::size_t j = 0; j < n_db; ++j) {
    DbImageRecord image;
    image.id = static_cast<ImageId>(j + 1);
    std::snprintf(name_buf, sizeof(name_buf), "db_%04zu", j + 1);
    image.name = name_buf;
    image.camera_id = 1;
    image.qvec = ring[j].quaternion();
    image.tvec = ring[j].translation;
    image.condition = Condition::kDay;
    DescriptorSet descs;
    descs.dim = spec.descriptor_dim;
    std::vector<Splat> splats;
    std::vector<Splat> twin_splats;
    for (std::size_t i = 0; i < spec.n_points; ++i) {
      const auto px = observe(ring[j], cam, points[i].position, points[i].normal);
      if (!px) continue;
      const Eigen::Vector2d kp = noisy(*px, spec.pixel_noise, cam, obs_rng);
      const double depth = ring[j].transform(points[i].position).z();
      ds.model.points[point_id(i, false)].track.push_back(
          {image.id, static_cast<std::uint32_t>(image.keypoints.size())});
      image.keypoints.push_back(kp);
      image.point3d_ids.push_back(point_id(i, false));
      append_descriptor(descs, points[i].descriptor, spec.observation_noise, obs_rng);
      splats.push_back({depth, kp, points[i].label});
      twin_splats.push_back({depth, kp, points[i].twin_label});
    }
    for (std::size_t c = 0; c < spec.clutter_keypoints; ++c) {
      image.keypoints.emplace_back(obs_rng.uniform(0.0, cam.width), obs_rng.uniform(0.0, cam.height));
      image.point3d_ids.push_back(kNoPoint);
      append_descriptor(descs, random_unit(spec.descriptor_dim, obs_rng), 0.0, obs_rng);
    }
    ds.db_labels[image.id] = render(cam, splats, ds.classes.void_id);

    if (twin) {
      // Same pixels and descriptors, seen from the translated ring.
      DbImageRecord copy = image;
      copy.id = static_cast<ImageId>(j + 1 + n_db);
      std::snprintf(name_buf, sizeof(name_buf), "twin_%04zu", j + 1);
      copy.name = name_buf;
      copy.tvec = ring[j].translation - ring[j].rotation * offset;
      for (std::size_t k = 0; k < copy.point3d_ids.size(); ++k) {
        PointId& pid = copy.point3d_ids[k];
        if (pid == kNoPoint) continue;
        pid += spec.n_points;
        ds.model.points[pid].track.push_back({copy.id, static_cast<std::uint32_t>(k)});
      }
      ds.db_labels[copy.id] = render(cam, twin_splats, ds.classes.void_id);
      ds.db_descriptors[copy.id] = descs;
      scene.twin_images.push_back(copy.id);
      ds.model.images[copy.id] = std::move(copy);
    }
    ds.db_descriptors[image.id] = std::move(descs);
    ds.model.images[image.id] = std::move(image);
  }

  for (const auto& [id, image] : ds.model.images) {
    GlobalDescriptor gd;
    gd.values.assign(global_dim, 0.0f);
    gd.values[id - 1] = 1.0f;
    ds.db_globals[id] = std::move(gd);
  }

  Rng query_rng(mix_seed(spec.seed, 4));
  const auto n_night = static_cast<std::size_t>(
      std::llround(spec.night_fraction * static_cast<double>(spec.n_queries)));
  for (std::size_t q = 0; q < spec.n_queries; ++q) {
    Pose pose;
    std::vector<std::pair<std::size_t, Eigen::Vector2d>> seen;
    for (std::size_t attempt = 0;; ++attempt) {
      require(attempt < kMaxAttempts, "cannot place query " + std::to_string(q));
      const double phi = query_rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double r = spec.ring_radius * query_rng.uniform(0.85, 1.05);
      const double z = query_rng.uniform(-0.5, 0.5);
      const double jitter = 0.05 * spec.extent;
      const Eigen::Vector3d target(query_rng.uniform(-jitter, jitter),
                                   query_rng.uniform(-jitter, jitter),
                                   query_rng.uniform(-jitter, jitter));
      pose = look_at_pose({r * std::cos(phi), r * std::sin(phi), z}, target);
      seen.clear();
      for (std::size_t i = 0; i < spec.n_points; ++i) {
        if (const auto px = observe(pose, cam, points[i].position, points[i].normal)) {
          seen.emplace_back(i, *px);
        }
      }
      if (seen.size() >= kMinQueryPoints) break;
    }

    QueryData query;
    std::snprintf(name_buf, sizeof(name_buf), "query_%04zu", q + 1);
    query.name = name_buf;
    query.camera = cam;
    query.condition = q < n_night ? Condition::kNight : Condition::kDay;
    query.descriptors.dim = spec.descriptor_dim;
    std::vector<PointId> ids;
    std::vector<Splat> splats;
    for (const auto& [i, px] : seen) {
      const Eigen::Vector2d kp = as_stored(noisy(px, spec.pixel_noise, cam, query_rng), cam);
      query.keypoints.push_back(kp);
      ids.push_back(point_id(i, false));
      append_descriptor(query.descriptors, points[i].descriptor, spec.observation_noise,
                        query_rng);
      splats.push_back({pose.transform(points[i].position).z(), kp, points[i].label});
    }
    for (std::size_t c = 0; c < spec.clutter_keypoints; ++c) {
      query.keypoints.push_back(
          as_stored({query_rng.uniform(0.0, cam.width), query_rng.uniform(0.0, cam.height)}, cam));
      ids.push_back(kNoPoint);
      append_descriptor(query.descriptors, random_unit(spec.descriptor_dim, query_rng), 0.0,
                        query_rng);
    }
    query.labels = render(cam, splats, ds.classes.void_id);
    query.global = ranking_descriptor(order_by_distance(ds.model, pose.center()), global_dim);
    scene.ground_truth[query.name] = pose;
    scene.query_point_ids.push_back(std::move(ids));
    ds.queries.push_back(std::move(query));
  }
  return scene;
}

CorruptionRecord corrupt(SyntheticScene& scene, const CorruptionSpec& corruption,
                         std::uint64_t seed) {
  corruption.validate();
  Dataset& ds = scene.dataset;
  CorruptionRecord record;
  record.spec = corruption;
  record.seed = seed;

  const std::size_t n_db = ds.model.images.size();
  const std::uint32_t global_dim =
      ds.db_globals.empty() ? 0 : static_cast<std::uint32_t>(ds.db_globals.begin()->second.dim());

  for (std::size_t q = 0; q < ds.queries.size(); ++q) {
    QueryData& query = ds.queries[q];
    QueryCorruption qc;
    qc.name = query.name;
    const Pose& gt = scene.ground_truth.at(query.name);

    if (corruption.wrong_retrieval_rate > 0.0) {
      const std::size_t k = corruption.k;
      require(k <= n_db, "corruption k exceeds the database size");
      const auto n_far = static_cast<std::size_t>(
          std::llround(corruption.wrong_retrieval_rate * static_cast<double>(k)));
      const std::vector<ImageId> order = order_by_distance(ds.model, gt.center());
      const std::vector<ImageId> top(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
      std::vector<ImageId> far;
      for (std::size_t r = (n_db + 1) / 2; r < n_db; ++r) {
        if (std::find(top.begin(), top.end(), order[r]) == top.end()) far.push_back(order[r]);
      }
      require(far.size() >= n_far, "not enough far database images for the requested rate");
      std::vector<bool> used(far.size(), false);
      for (std::size_t i = 0; i < n_far; ++i) {
        const Eigen::Vector3d axis = ds.model.images.at(top[i]).pose().rotation.row(2);
        std::size_t best = far.size();
        double best_dot = -2.0;
        for (std::size_t f = 0; f < far.size(); ++f) {
          if (used[f]) continue;
          const double d = axis.dot(ds.model.images.at(far[f]).pose().rotation.row(2));
          if (d > best_dot || (d == best_dot && far[f] < far[best])) {
            best_dot = d;
            best = f;
          }
        }
        used[best] = true;
        qc.forced_far.push_back(far[best]);
      }
      std::vector<ImageId> corrupted;
      for (std::size_t i = 0; i < k; ++i) {
        if (i < n_far) corrupted.push_back(qc.forced_far[i]);
        if (n_far + i < k) corrupted.push_back(top[n_far + i]);
      }
      for (const ImageId id : order) {
        if (std::find(corrupted.begin(), corrupted.end(), id) == corrupted.end()) {
          corrupted.push_back(id);
        }
      }
      query.global = ranking_descriptor(corrupted, global_dim);
    }

    if (corruption.descriptor_noise > 0.0) {
      Rng rng(mix_seed(seed, 4 * q + 1));
      for (float& x : query.descriptors.data) {
        x = static_cast<float>(x + rng.normal(0.0, corruption.descriptor_noise));
      }
    }

    if (corruption.label_flip_rate > 0.0) {
      Rng rng(mix_seed(seed, 4 * q + 2));
      const std::size_t n_pix = query.labels.labels.size();
      const auto m = static_cast<std::size_t>(
          std::llround(corruption.label_flip_rate * static_cast<double>(n_pix)));
      std::vector<std::size_t> idx(n_pix);
      for (std::size_t i = 0; i < n_pix; ++i) idx[i] = i;
      const auto n_classes = static_cast<std::uint64_t>(ds.classes.size());
      for (std::size_t i = 0; i < m; ++i) {
        std::swap(idx[i], idx[i + rng.uniform_index(n_pix - i)]);
        std::uint8_t& label = query.labels.labels[idx[i]];
        std::uint8_t next = label;
        while (next == label) next = static_cast<std::uint8_t>(rng.uniform_index(n_classes));
        label = next;
      }
      qc.flipped_pixels = m;
    }

    if (corruption.outlier_match_rate > 0.0) {
      Rng rng(mix_seed(seed, 4 * q + 3));
      std::vector<std::uint32_t> bearing;
      const auto& ids = scene.query_point_ids.at(q);
      for (std::uint32_t i = 0; i < ids.size(); ++i) {
        if (ids[i] != kNoPoint) bearing.push_back(i);
      }
      const auto m = static_cast<std::size_t>(
          std::llround(corruption.outlier_match_rate * static_cast<double>(bearing.size())));
      for (std::size_t i = 0; i < m; ++i) {
        std::swap(bearing[i], bearing[i + rng.uniform_index(bearing.size() - i)]);
        Eigen::Vector2d& kp = query.keypoints[bearing[i]];
        Eigen::Vector2d moved;
        do {
          moved = as_stored(
              {rng.uniform(0.0, query.camera.width), rng.uniform(0.0, query.camera.height)},
              query.camera);
        } while ((moved - kp).norm() < kOutlierMinShift);
        kp = moved;
        qc.outlier_keypoints.push_back(bearing[i]);
      }
      std::sort(qc.outlier_keypoints.begin(), qc.outlier_keypoints.end());
    }
    record.queries.push_back(std::move(qc));
  }
  return record;
}

void write_scene(const SyntheticScene& scene, const std::filesystem::path& root) {
  write_dataset(scene.dataset, root);
  write_poses(scene.ground_truth, DatasetLayout(root).ground_truth());
}

void write_corruption_record(const CorruptionRecord& record, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["seed"] = record.seed;
  j["spec"] = {{"wrong_retrieval_rate", record.spec.wrong_retrieval_rate},
               {"descriptor_noise", record.spec.descriptor_noise},
               {"label_flip_rate", record.spec.label_flip_rate},
               {"outlier_match_rate", record.spec.outlier_match_rate},
               {"k", record.spec.k}};
  j["queries"] = nlohmann::ordered_json::array();
  for (const QueryCorruption& qc : record.queries) {
    j["queries"].push_back({{"name", qc.name},
                            {"forced_far", qc.forced_far},
                            {"outlier_keypoints", qc.outlier_keypoints},
                            {"flipped_pixels", qc.flipped_pixels}});
  }
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

}  // namespace semloc
