#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "semloc/model_io.h"

namespace semloc {

struct RetrievalConfig {
  std::size_t k_day = 30;
  std::size_t k_night = 50;

  std::size_t k_for(Condition condition) const {
    return condition == Condition::kNight ? k_night : k_day;
  }
};

struct RankedCandidate {
  ImageId image_id = 0;
  double distance = 0.0;

  bool operator==(const RankedCandidate&) const = default;
};

using RankedCandidates = std::vector<RankedCandidate>;

// Exact k smallest L2 distances, ties by ascending image id. k is clamped to
// the database size (with a warning). Throws DimMismatch when any descriptor
// disagrees with the query dim.
RankedCandidates rank_database(const GlobalDescriptor& query,
                               const std::map<ImageId, GlobalDescriptor>& database,
                               std::size_t k);

// Same ranking through descending dot products. Only equivalent for unit
// vectors; kept as a cross-check.
RankedCandidates rank_database_by_similarity(const GlobalDescriptor& query,
                                             const std::map<ImageId, GlobalDescriptor>& database,
                                             std::size_t k);

}  // namespace semloc
