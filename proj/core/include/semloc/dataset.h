#pragma once

// Directory layout of a localization dataset and whole-bundle I/O.
//
//   <root>/model/{cameras,images,points3D}.txt   SfM model (database only)
//   <root>/classes.txt                           class table
//   <root>/conditions.txt                        day/night tag per image
//   <root>/queries.txt                           query names + intrinsics
//   <root>/db/<name>.{labels.pgm,ldsc,gdsc}      per database image
//   <root>/query/<name>.{labels.pgm,kpts,ldsc,gdsc}
//   <root>/ground_truth.txt                      optional, query poses
//   <root>/semantic_map.bin                      optional map cache

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "semloc/model_io.h"

namespace semloc {

struct DatasetLayout {
  std::filesystem::path root;

  explicit DatasetLayout(std::filesystem::path r) : root(std::move(r)) {}

  std::filesystem::path model_dir() const { return root / "model"; }
  std::filesystem::path classes() const { return root / "classes.txt"; }
  std::filesystem::path conditions() const { return root / "conditions.txt"; }
  std::filesystem::path queries() const { return root / "queries.txt"; }
  std::filesystem::path ground_truth() const { return root / "ground_truth.txt"; }
  std::filesystem::path map_cache() const { return root / "semantic_map.bin"; }

  std::filesystem::path db_labels(const std::string& name) const {
    return root / "db" / (name + ".labels.pgm");
  }
  std::filesystem::path db_descriptors(const std::string& name) const {
    return root / "db" / (name + ".ldsc");
  }
  std::filesystem::path db_global(const std::string& name) const {
    return root / "db" / (name + ".gdsc");
  }
  std::filesystem::path query_labels(const std::string& name) const {
    return root / "query" / (name + ".labels.pgm");
  }
  std::filesystem::path query_keypoints(const std::string& name) const {
    return root / "query" / (name + ".kpts");
  }
  std::filesystem::path query_descriptors(const std::string& name) const {
    return root / "query" / (name + ".ldsc");
  }
  std::filesystem::path query_global(const std::string& name) const {
    return root / "query" / (name + ".gdsc");
  }
};

struct QueryData {
  std::string name;
  CameraIntrinsics camera;
  std::vector<Eigen::Vector2d> keypoints;
  DescriptorSet descriptors;
  GlobalDescriptor global;
  LabelRaster labels;
  Condition condition = Condition::kDay;

  bool operator==(const QueryData&) const = default;
};

struct Dataset {
  SfmModel model;
  ClassTable classes;
  std::map<ImageId, LabelRaster> db_labels;
  std::map<ImageId, DescriptorSet> db_descriptors;
  std::map<ImageId, GlobalDescriptor> db_globals;
  std::vector<QueryData> queries;

  bool operator==(const Dataset&) const = default;
};

// Loads and cross-checks everything; throws on the first problem. Use
// validate_dataset first for a complete list of findings.
Dataset load_dataset(const std::filesystem::path& root);
void write_dataset(const Dataset& dataset, const std::filesystem::path& root);

struct Finding {
  std::string subject;  // image / query name, or a file name
  std::string message;
};

struct ValidationReport {
  bool ok = true;
  std::vector<Finding> findings;
};

// Checks presence and agreement of every file without throwing. ok is true
// iff there are no findings.
ValidationReport validate_dataset(const std::filesystem::path& root);

}  // namespace semloc
