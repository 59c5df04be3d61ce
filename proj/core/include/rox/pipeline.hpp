#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "rox/corpus.hpp"
#include "rox/model.hpp"
#include "rox/quantizer.hpp"
#include "rox/text.hpp"

namespace rox {

struct TrainOptions {
  std::uint64_t seed = 0;
  double alpha = 0.1;
  TextOptions text = TextOptions::defaults();
  EmbedderConfig embedder;
  std::size_t reduced_dim = 64;
  ClusterParams observation_clusters;
  ClusterParams solution_clusters;
  std::string fitted_at;
};

struct TrainSummary {
  std::size_t records = 0;
  DomainSizes sizes{};
  std::size_t observation_noise = 0;  // texts attached to a centroid after grouping
  std::size_t solution_noise = 0;
  std::size_t environments = 0;
};

/// clean -> fit observation and solution quantizers -> fit the network ->
/// index solution texts. Deterministic in (corpus, options).
CbnModel train_model(const Corpus& corpus, const TrainOptions& options,
                     TrainSummary* summary = nullptr);

}  // namespace rox
