#pragma once

#include <string>
#include <vector>

namespace rox {

struct IndexedSolution {
  std::string record_id;
  std::string text;   // raw solution text
  double distance = 0.0;  // cosine distance of the reduced vector to its centroid

  friend bool operator==(const IndexedSolution&, const IndexedSolution&) = default;
};

/// Solution texts bucketed by solution category, each bucket sorted by
/// ascending centroid distance (record_id breaks ties).
struct SolutionIndex {
  std::vector<std::vector<IndexedSolution>> buckets;

  friend bool operator==(const SolutionIndex&, const SolutionIndex&) = default;
};

}  // namespace rox
