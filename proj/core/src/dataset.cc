#include "semloc/dataset.h"

#include <algorithm>
#include <set>

#include "semloc/errors.h"

namespace semloc {

namespace fs = std::filesystem;

Dataset load_dataset(const fs::path& root) {
  const DatasetLayout layout(root);
  Dataset ds;
  ds.model = load_sfm_model(layout.model_dir());
  ds.classes = load_class_table(layout.classes());
  const auto conditions = load_conditions(layout.conditions());

  for (auto& [id, image] : ds.model.images) {
    const auto cond = conditions.find(image.name);
    if (cond == conditions.end()) {
      throw ConsistencyError("no condition tag for database image " + image.name);
    }
    image.condition = cond->second;
    const CameraIntrinsics& cam = ds.model.cameras.at(image.camera_id);
    ds.db_labels.emplace(id, load_label_raster(layout.db_labels(image.name), cam.width, cam.height,
                                               ds.classes));
    DescriptorSet descs = load_descriptors(layout.db_descriptors(image.name));
    if (descs.rows != image.keypoints.size()) {
      throw ConsistencyError(layout.db_descriptors(image.name).string() + ": " +
                             std::to_string(descs.rows) + " descriptors for " +
                             std::to_string(image.keypoints.size()) + " keypoints");
    }
    ds.db_descriptors.emplace(id, std::move(descs));
    ds.db_globals.emplace(id, load_global_descriptor(layout.db_global(image.name)));
  }

  for (const QueryIntrinsics& qi : load_query_list(layout.queries())) {
    QueryData q;
    q.name = qi.name;
    q.camera = qi.camera;
    const auto cond = conditions.find(q.name);
    if (cond == conditions.end()) {
      throw ConsistencyError("no condition tag for query " + q.name);
    }
    q.condition = cond->second;
    q.keypoints = load_keypoints(layout.query_keypoints(q.name));
    for (const auto& kp : q.keypoints) {
      if (!q.camera.contains(kp)) {
        throw ConsistencyError("query " + q.name + " has a keypoint outside the image");
      }
    }
    q.descriptors = load_descriptors(layout.query_descriptors(q.name));
    if (q.descriptors.rows != q.keypoints.size()) {
      throw ConsistencyError(layout.query_descriptors(q.name).string() +
                             ": descriptor count differs from keypoint count");
    }
    q.global = load_global_descriptor(layout.query_global(q.name));
    q.labels = load_label_raster(layout.query_labels(q.name), q.camera.width, q.camera.height,
                                 ds.classes);
    ds.queries.push_back(std::move(q));
  }
  return ds;
}

void write_dataset(const Dataset& ds, const fs::path& root) {
  const DatasetLayout layout(root);
  fs::create_directories(root);
  write_sfm_model(ds.model, layout.model_dir());
  write_class_table(ds.classes, layout.classes());

  std::map<std::string, Condition> conditions;
  for (const auto& [id, image] : ds.model.images) {
    if (image.condition) {
      conditions[image.name] = *image.condition;
    }
    if (const auto it = ds.db_labels.find(id); it != ds.db_labels.end()) {
      write_label_raster(it->second, layout.db_labels(image.name));
    }
    if (const auto it = ds.db_descriptors.find(id); it != ds.db_descriptors.end()) {
      write_descriptors(it->second, layout.db_descriptors(image.name));
    }
    if (const auto it = ds.db_globals.find(id); it != ds.db_globals.end()) {
      write_global_descriptor(it->second, layout.db_global(image.name));
    }
  }

  std::vector<QueryIntrinsics> query_list;
  for (const QueryData& q : ds.queries) {
    conditions[q.name] = q.condition;
    query_list.push_back({q.name, q.camera});
    write_keypoints(q.keypoints, layout.query_keypoints(q.name));
    write_descriptors(q.descriptors, layout.query_descriptors(q.name));
    write_global_descriptor(q.global, layout.query_global(q.name));
    write_label_raster(q.labels, layout.query_labels(q.name));
  }
  write_conditions(conditions, layout.conditions());
  write_query_list(query_list, layout.queries());
}

namespace {

class Validator {
 public:
  void add(const std::string& subject, const std::string& message) {
    report_.findings.push_back({subject, message});
    report_.ok = false;
  }

  template <typename Fn>
  bool attempt(const std::string& subject, Fn&& fn) {
    try {
      fn();
      return true;
    } catch (const std::exception& e) {
      add(subject, e.what());
      return false;
    }
  }

  void check_raster(const std::string& subject, const fs::path& path, const CameraIntrinsics& cam,
                    const ClassTable* classes) {
    if (!fs::exists(path)) {
      add(subject, "missing label raster " + path.string());
      return;
    }
    if (classes != nullptr) {
      attempt(subject, [&] { load_label_raster(path, cam.width, cam.height, *classes); });
    } else {
      attempt(subject, [&] {
        const auto [w, h] = read_label_raster_dims(path);
        if (w != cam.width || h != cam.height) {
          throw DimensionMismatch(path.string() + ": raster size differs from image size");
        }
      });
    }
  }

  // Returns the descriptor dim, or 0 when the file is unusable.
  std::uint32_t check_descriptors(const std::string& subject, const fs::path& path,
                                  std::size_t expected_rows) {
    if (!fs::exists(path)) {
      add(subject, "missing descriptor file " + path.string());
      return 0;
    }
    std::uint32_t dim = 0;
    attempt(subject, [&] {
      const DescriptorSet set = load_descriptors(path);
      if (set.rows != expected_rows) {
        throw ConsistencyError(path.string() + ": " + std::to_string(set.rows) +
                               " descriptors for " + std::to_string(expected_rows) + " keypoints");
      }
      dim = set.dim;
    });
    return dim;
  }

  std::uint32_t check_global(const std::string& subject, const fs::path& path) {
    if (!fs::exists(path)) {
      add(subject, "missing global descriptor " + path.string());
      return 0;
    }
    std::uint32_t dim = 0;
    attempt(subject, [&] { dim = static_cast<std::uint32_t>(load_global_descriptor(path).dim()); });
    return dim;
  }

  // One finding per subject whose dim differs from the most common one.
  void check_uniform_dims(const std::map<std::string, std::uint32_t>& dims, const char* what) {
    std::map<std::uint32_t, std::size_t> counts;
    for (const auto& [subject, dim] : dims) {
      if (dim != 0) ++counts[dim];
    }
    if (counts.size() <= 1) {
      return;
    }
    const auto majority = std::max_element(counts.begin(), counts.end(), [](auto& a, auto& b) {
                            return a.second < b.second;
                          })->first;
    for (const auto& [subject, dim] : dims) {
      if (dim != 0 && dim != majority) {
        add(subject, std::string(what) + " dimension " + std::to_string(dim) +
                         " differs from the dataset's " + std::to_string(majority));
      }
    }
  }

  ValidationReport take() { return std::move(report_); }

 private:
  ValidationReport report_;
};

}  // namespace

ValidationReport validate_dataset(const fs::path& root) {
  const DatasetLayout layout(root);
  Validator v;

  SfmModel model;
  if (!v.attempt("model", [&] { model = load_sfm_model(layout.model_dir()); })) {
    return v.take();
  }
  ClassTable classes;
  const bool have_classes =
      v.attempt("classes.txt", [&] { classes = load_class_table(layout.classes()); });
  std::map<std::string, Condition> conditions;
  v.attempt("conditions.txt", [&] { conditions = load_conditions(layout.conditions()); });
  std::vector<QueryIntrinsics> queries;
  v.attempt("queries.txt", [&] { queries = load_query_list(layout.queries()); });

  std::map<std::string, std::uint32_t> local_dims;
  std::map<std::string, std::uint32_t> global_dims;
  const ClassTable* table = have_classes ? &classes : nullptr;

  for (const auto& [id, image] : model.images) {
    if (!conditions.contains(image.name)) {
      v.add(image.name, "no condition tag in conditions.txt");
    }
    const CameraIntrinsics& cam = model.cameras.at(image.camera_id);
    v.check_raster(image.name, layout.db_labels(image.name), cam, table);
    local_dims[image.name] =
        v.check_descriptors(image.name, layout.db_descriptors(image.name), image.keypoints.size());
    global_dims[image.name] = v.check_global(image.name, layout.db_global(image.name));
  }

  for (const QueryIntrinsics& q : queries) {
    if (!conditions.contains(q.name)) {
      v.add(q.name, "no condition tag in conditions.txt");
    }
    v.check_raster(q.name, layout.query_labels(q.name), q.camera, table);
    std::size_t n_keypoints = 0;
    const fs::path kpts = layout.query_keypoints(q.name);
    if (!fs::exists(kpts)) {
      v.add(q.name, "missing keypoint file " + kpts.string());
    } else {
      v.attempt(q.name, [&] {
        const auto keypoints = load_keypoints(kpts);
        n_keypoints = keypoints.size();
        for (const auto& kp : keypoints) {
          if (!q.camera.contains(kp)) {
            throw ConsistencyError(kpts.string() + ": keypoint outside the image");
          }
        }
      });
    }
    local_dims[q.name] = v.check_descriptors(q.name, layout.query_descriptors(q.name), n_keypoints);
    global_dims[q.name] = v.check_global(q.name, layout.query_global(q.name));
  }

  v.check_uniform_dims(local_dims, "local descriptor");
  v.check_uniform_dims(global_dims, "global descriptor");
  return v.take();
}

}  // namespace semloc
