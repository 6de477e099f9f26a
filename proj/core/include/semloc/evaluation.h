#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semloc/geometry.h"
#include "semloc/model_io.h"

namespace semloc {

struct Threshold {
  double meters = 0.0;
  double degrees = 0.0;

  bool operator==(const Threshold&) const = default;
};

struct ThresholdBuckets {
  Threshold fine{0.25, 2.0};
  Threshold medium{0.5, 5.0};
  Threshold coarse{5.0, 10.0};

  std::array<Threshold, 3> as_array() const { return {fine, medium, coarse}; }
  bool operator==(const ThresholdBuckets&) const = default;
};

// Percentages of queries within each bucket (both error terms <= bound).
// nullopt entries are failed queries: they count in no bucket but in the
// denominator. An empty list gives zeros.
std::array<double, 3> bucket_errors(const std::vector<std::optional<PoseError>>& errors,
                                    const ThresholdBuckets& buckets = {});

// "<name> qw qx qy qz tx ty tz" per line, world-to-camera, sorted by name.
void write_poses(const std::map<std::string, Pose>& poses, const std::filesystem::path& path);
std::map<std::string, Pose> load_poses(const std::filesystem::path& path);

struct QueryRow {
  std::string name;
  Condition condition = Condition::kDay;
  std::optional<PoseError> error;  // nullopt when the query failed
  std::size_t inliers = 0;
  bool used_fallback = false;
};

struct EvalReport {
  ThresholdBuckets buckets;
  // Keyed by condition tag, plus "all".
  std::map<std::string, std::array<double, 3>> percentages;
  std::vector<QueryRow> rows;  // sorted by name
};

EvalReport make_report(std::vector<QueryRow> rows, const ThresholdBuckets& buckets = {});

}  // namespace semloc
