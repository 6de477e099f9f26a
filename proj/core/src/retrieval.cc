#include "semloc/retrieval.h"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "semloc/errors.h"

namespace semloc {

namespace {

void check_dims(const GlobalDescriptor& query,
                const std::map<ImageId, GlobalDescriptor>& database) {
  for (const auto& [id, gd] : database) {
    if (gd.dim() != query.dim()) {
      throw DimMismatch("global descriptor of image " + std::to_string(id) + " has dim " +
                        std::to_string(gd.dim()) + ", query has " + std::to_string(query.dim()));
    }
  }
}

std::size_t clamp_k(std::size_t k, std::size_t size) {
  if (k > size) {
    spdlog::warn("retrieval k={} exceeds database size {}; using {}", k, size, size);
    return size;
  }
  return k;
}

// Partial sort on (key, id); the key is whatever orders candidates best-first.
template <typename KeyFn>
RankedCandidates top_k(const std::map<ImageId, GlobalDescriptor>& database, std::size_t k,
                       KeyFn&& key) {
  struct Entry {
    double key;
    double distance;
    ImageId id;
  };
  std::vector<Entry> entries;
  entries.reserve(database.size());
  for (const auto& [id, gd] : database) {
    const auto [sort_key, distance] = key(gd);
    entries.push_back({sort_key, distance, id});
  }
  const auto cmp = [](const Entry& a, const Entry& b) {
    return a.key != b.key ? a.key < b.key : a.id < b.id;
  };
  std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(k),
                    entries.end(), cmp);
  RankedCandidates out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back({entries[i].id, entries[i].distance});
  }
  return out;
}

}  // namespace

RankedCandidates rank_database(const GlobalDescriptor& query,
                               const std::map<ImageId, GlobalDescriptor>& database,
                               std::size_t k) {
  check_dims(query, database);
  k = clamp_k(k, database.size());
  return top_k(database, k, [&](const GlobalDescriptor& gd) {
    double sq = 0.0;
    for (std::size_t i = 0; i < gd.dim(); ++i) {
      const double d = static_cast<double>(query.values[i]) - gd.values[i];
      sq += d * d;
    }
    const double dist = std::sqrt(sq);
    return std::pair{dist, dist};
  });
}

RankedCandidates rank_database_by_similarity(const GlobalDescriptor& query,
                                             const std::map<ImageId, GlobalDescriptor>& database,
                                             std::size_t k) {
  check_dims(query, database);
  k = clamp_k(k, database.size());
  return top_k(database, k, [&](const GlobalDescriptor& gd) {
    double dot = 0.0;
    for (std::size_t i = 0; i < gd.dim(); ++i) {
      dot += static_cast<double>(query.values[i]) * gd.values[i];
    }
    return std::pair{-dot, std::sqrt(std::max(0.0, 2.0 - 2.0 * dot))};
  });
}

}  // namespace semloc
