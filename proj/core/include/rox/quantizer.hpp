#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rox/text.hpp"

namespace rox {

using CategoryId = std::uint32_t;

struct EmbeddingVector {
  std::vector<double> values;
  bool degenerate = false;  // zero vector (no tokens, or complete cancellation)

  std::size_t dim() const noexcept { return values.size(); }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

double l2_norm(std::span<const double> v);
/// 1 - cos(a, b); zero vectors are at distance 1 from everything.
double cosine_distance(std::span<const double> a, std::span<const double> b);

enum class EmbedderKind { kHashed, kRemote };

struct EmbedderConfig {
  EmbedderKind kind = EmbedderKind::kHashed;
  std::size_t dim = 4096;
  std::string url;          // remote only
  int timeout_ms = 5000;    // remote only

  friend bool operator==(const EmbedderConfig&, const EmbedderConfig&) = default;
};

/// Signed feature-hashed term frequencies, L2-normalized.
EmbeddingVector hashed_embedding(const CleanText& text, std::size_t dim);

/// Client for an embedding service: POST {"texts": [...]} -> {"vectors": [[...]]}.
/// Returned vectors are L2-normalized locally.
class RemoteEmbedder {
 public:
  RemoteEmbedder(std::string url, int timeout_ms);
  std::vector<EmbeddingVector> embed(std::span<const CleanText> texts) const;

 private:
  std::string url_;
  int timeout_ms_;
};

EmbeddingVector embed(const CleanText& text, const EmbedderConfig& config);
std::vector<EmbeddingVector> embed_all(std::span<const CleanText> texts,
                                       const EmbedderConfig& config);

/// Descriptor of a seeded sparse random projection. The matrix is never
/// stored; it is regenerated from (seed, dims).
struct ReducerSpec {
  std::uint64_t seed = 0;
  std::size_t input_dim = 4096;
  std::size_t output_dim = 64;
  std::uint32_t density_inverse = 16;  // each entry nonzero with probability 1/16

  friend bool operator==(const ReducerSpec&, const ReducerSpec&) = default;
};

class RandomProjection {
 public:
  explicit RandomProjection(const ReducerSpec& spec);

  const ReducerSpec& spec() const noexcept { return spec_; }
  EmbeddingVector apply(const EmbeddingVector& v) const;

 private:
  struct Entry {
    std::uint32_t row;
    double value;
  };
  ReducerSpec spec_;
  std::vector<std::vector<Entry>> columns_;  // per input coordinate
};

/// Projects every vector with the projection fixed by `seed`.
std::vector<EmbeddingVector> reduce(std::span<const EmbeddingVector> vectors,
                                    std::size_t target_dim, std::uint64_t seed);

struct ClusterParams {
  std::size_t min_cluster_size = 5;
  double distance_threshold = 0.35;

  friend bool operator==(const ClusterParams&, const ClusterParams&) = default;
};

struct CodebookCategory {
  CategoryId id = 0;
  std::vector<double> centroid;  // unit length, reduced space
  std::size_t member_count = 0;

  friend bool operator==(const CodebookCategory&, const CodebookCategory&) = default;
};

struct Codebook {
  std::vector<CodebookCategory> categories;
  ReducerSpec reducer;
  ClusterParams params;

  std::size_t size() const noexcept { return categories.size(); }
  /// Nearest centroid by cosine distance, smallest id on ties; degenerate
  /// vectors go to the largest category.
  CategoryId nearest(const EmbeddingVector& reduced) const;
  CategoryId largest() const;

  friend bool operator==(const Codebook&, const Codebook&) = default;
};

struct Membership {
  CategoryId category = 0;
  bool noise = false;  // attached to the nearest centroid after grouping
};

/// Density grouping: points with at least `min_cluster_size` neighbors
/// (self included) within `distance_threshold` seed clusters, reachable points
/// join, leftovers attach to the nearest centroid. `membership`, when given,
/// receives one entry per input vector.
Codebook fit_codebook(std::span<const EmbeddingVector> reduced,
                      const ClusterParams& params,
                      std::vector<Membership>* membership = nullptr);

enum class Field { kObservation, kSolution };
std::string_view to_string(Field field);

struct Quantizer {
  Field field = Field::kObservation;
  EmbedderConfig embedder;
  Codebook codebook;

  /// Embeds and reduces a cleaned text into codebook space.
  EmbeddingVector project(const CleanText& text) const;
  CategoryId assign(const CleanText& text) const;

  friend bool operator==(const Quantizer&, const Quantizer&) = default;
};

struct QuantizerFit {
  Quantizer quantizer;
  std::vector<Membership> membership;  // per training text
  std::vector<EmbeddingVector> reduced;
};

QuantizerFit fit_quantizer(Field field, std::span<const CleanText> texts,
                           const EmbedderConfig& embedder, std::size_t reduced_dim,
                           std::uint64_t seed, const ClusterParams& params);

}  // namespace rox
