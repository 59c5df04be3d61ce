#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rox/corpus.hpp"
#include "rox/cpt.hpp"
#include "rox/quantizer.hpp"
#include "rox/solution_index.hpp"
#include "rox/text.hpp"

namespace rox {

inline constexpr int kSchemaVersion = 1;

/// Parents in the fixed troubleshooting graph:
/// Z -> C, Z -> O, Z -> S, C -> O, C -> S, O -> S.
const std::vector<Var>& parents_of(Var v);

struct ModelMeta {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  double alpha = 0.1;
  std::string fitted_at;
  std::size_t training_records = 0;

  friend bool operator==(const ModelMeta&, const ModelMeta&) = default;
};

/// Causal Bayesian network over (Z, C, O, S) plus the text machinery needed
/// to map raw observations onto its O domain. Immutable once built.
struct CbnModel {
  std::array<CategoricalDomain, kNumVars> domains;
  std::array<SparseCpt, kNumVars> cpts;  // P(Z), P(C|Z), P(O|C,Z), P(S|C,Z,O)
  std::map<std::string, std::vector<double>> env_z_marginals;
  ModelMeta meta;

  TextOptions text = TextOptions::defaults();
  std::optional<Quantizer> observation_quantizer;
  std::optional<Quantizer> solution_quantizer;
  std::optional<SolutionIndex> solution_index;

  const CategoricalDomain& domain(Var v) const { return domains[idx(v)]; }
  const SparseCpt& cpt(Var v) const { return cpts[idx(v)]; }
  DomainSizes sizes() const;
  double factor(Var v, const Assignment& a) const { return cpts[idx(v)].probability(a); }

  /// Raw text -> O category, using the model's cleaning and quantizer.
  CategoryId encode_observation(std::string_view text) const;
  CategoryId encode_solution(std::string_view text) const;

  friend bool operator==(const CbnModel&, const CbnModel&) = default;
};

struct EncodedRecord {
  Assignment values{};
  std::string environment;
};

struct FitOptions {
  double alpha = 0.1;
  /// Backoff chains per variable; the defaults drop the most specific parent
  /// first: O|C,Z -> O|Z, S|C,Z,O -> S|C,Z -> S|Z.
  std::array<std::vector<std::vector<Var>>, kNumVars> backoff = {
      std::vector<std::vector<Var>>{},
      std::vector<std::vector<Var>>{},
      std::vector<std::vector<Var>>{{Var::Z}},
      std::vector<std::vector<Var>>{{Var::C, Var::Z}, {Var::Z}},
  };
  std::uint64_t seed = 0;
  std::string fitted_at;
};

/// Fits smoothed CPTs and per-environment Z marginals from encoded tuples.
CbnModel fit_counts(std::array<CategoricalDomain, kNumVars> domains,
                    std::span<const EncodedRecord> data, const FitOptions& options);

/// Encodes a corpus with fitted quantizers (Z/C domains = sorted training
/// labels, O/S domains = category ids) and fits the CPTs.
CbnModel fit(const Corpus& train, const Quantizer& observation, const Quantizer& solution,
             const TextOptions& text, const FitOptions& options);

/// Builds a model from explicit probability tables, laid out as in
/// SparseCpt::from_table. Used for ground-truth models.
CbnModel from_tables(std::array<CategoricalDomain, kNumVars> domains,
                     std::array<std::vector<double>, kNumVars> tables,
                     std::map<std::string, std::vector<double>> env_z_marginals = {});

/// Labels for O/S domains backed by a codebook: "0" .. "n-1".
std::vector<std::string> category_labels(std::size_t n);

double joint(const CbnModel& model, const Assignment& a);
/// Throws Error{kDomain} for labels outside their domains.
double joint(const CbnModel& model, std::string_view z, std::string_view c, std::string_view o,
             std::string_view s);

/// Single JSON document: {schema_version, meta, domains, cpts, quantizers,
/// env_z_marginals, text, solution_index}.
std::string save(const CbnModel& model);
/// Throws ParseError (with byte offset) on malformed input and
/// Error{kUnsupportedVersion} on a schema mismatch.
CbnModel load(std::string_view artifact);

/// Writes through a temporary file and renames it into place.
void save_file(const CbnModel& model, const std::filesystem::path& path);
CbnModel load_file(const std::filesystem::path& path);

}  // namespace rox
