#include "semloc/evaluation.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "semloc/errors.h"

namespace semloc {

std::array<double, 3> bucket_errors(const std::vector<std::optional<PoseError>>& errors,
                                    const ThresholdBuckets& buckets) {
  std::array<double, 3> pct{0.0, 0.0, 0.0};
  if (errors.empty()) {
    return pct;
  }
  const auto thresholds = buckets.as_array();
  std::array<std::size_t, 3> hits{0, 0, 0};
  for (const auto& e : errors) {
    if (!e) continue;
    for (std::size_t b = 0; b < 3; ++b) {
      if (e->translation_m <= thresholds[b].meters && e->rotation_deg <= thresholds[b].degrees) {
        ++hits[b];
      }
    }
  }
  for (std::size_t b = 0; b < 3; ++b) {
    pct[b] = 100.0 * static_cast<double>(hits[b]) / static_cast<double>(errors.size());
  }
  return pct;
}

void write_poses(const std::map<std::string, Pose>& poses, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  for (const auto& [name, pose] : poses) {
    Eigen::Quaterniond q = pose.quaternion().normalized();
    // q and -q are the same rotation; pick the one with qw >= 0.
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    out << name << ' ' << format_double(q.w()) << ' ' << format_double(q.x()) << ' '
        << format_double(q.y()) << ' ' << format_double(q.z()) << ' '
        << format_double(pose.translation.x()) << ' ' << format_double(pose.translation.y())
        << ' ' << format_double(pose.translation.z()) << '\n';
  }
}

std::map<std::string, Pose> load_poses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError(path.string(), "cannot open file");
  }
  std::map<std::string, Pose> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string name;
    double v[7];
    ss >> name;
    for (double& x : v) ss >> x;
    std::string extra;
    if (!ss || (ss >> extra)) {
      throw ParseError(path.string(), line_no, "expected <name> qw qx qy qz tx ty tz");
    }
    const Eigen::Quaterniond q(v[0], v[1], v[2], v[3]);
    if (q.norm() < 1e-12) {
      throw ParseError(path.string(), line_no, "zero quaternion");
    }
    if (!poses.emplace(name, Pose::from_quaternion(q.normalized(), {v[4], v[5], v[6]})).second) {
      throw ParseError(path.string(), line_no, "duplicate pose for " + name);
    }
  }
  return poses;
}

EvalReport make_report(std::vector<QueryRow> rows, const ThresholdBuckets& buckets) {
  std::sort(rows.begin(), rows.end(),
            [](const QueryRow& a, const QueryRow& b) { return a.name < b.name; });
  EvalReport report;
  report.buckets = buckets;
  std::map<std::string, std::vector<std::optional<PoseError>>> groups;
  auto& all = groups["all"];
  for (const QueryRow& r : rows) {
    groups[to_string(r.condition)].push_back(r.error);
    all.push_back(r.error);
  }
  for (const auto& [tag, errs] : groups) {
    report.percentages[tag] = bucket_errors(errs, buckets);
  }
  report.rows = std::move(rows);
  return report;
}

}  // namespace semloc
