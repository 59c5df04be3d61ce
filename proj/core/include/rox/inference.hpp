#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rox/model.hpp"

namespace rox {

/// Observed labels for any subset of the variables.
struct Evidence {
  std::optional<std::string> z, c, o, s;

  const std::optional<std::string>& get(Var v) const;
  std::optional<std::string>& get(Var v);
};

struct RankedEntry {
  std::string label;
  std::size_t index = 0;
  double probability = 0.0;

  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

/// Probabilities over one domain, sorted descending; equal probabilities keep
/// domain order. After truncate() the entries keep their untruncated values.
struct RankedDistribution {
  Var variable = Var::C;
  std::vector<RankedEntry> entries;
  double total = 0.0;  // sum over the entries present

  static RankedDistribution from_probabilities(Var variable, const CategoricalDomain& domain,
                                               std::span<const double> probabilities);
  RankedDistribution truncated(std::size_t top_k) const;
  /// Probability by domain index (0 if absent after truncation).
  double probability_of(std::size_t index) const;
  const RankedEntry& top() const { return entries.front(); }

  friend bool operator==(const RankedDistribution&, const RankedDistribution&) = default;
};

/// P(query | evidence) by exact enumeration of the unobserved ancestors of
/// the query and evidence variables.
RankedDistribution conditional(const CbnModel& model, Var query, const Evidence& evidence);
std::vector<double> conditional_probabilities(const CbnModel& model, Var query,
                                              const std::array<std::optional<std::size_t>, kNumVars>& evidence);

/// P(C | O = assign(text)), optionally with Z observed.
RankedDistribution rca(const CbnModel& model, std::string_view observation_text, std::size_t top_k,
                       std::optional<std::string> subsystem = std::nullopt);

/// Backdoor adjustment over (C, Z): sum_{c,z} P(c|z) P(S|c,z,o) P_target(z).
std::vector<double> adjusted_solution(const CbnModel& model, std::size_t o,
                                      std::span<const double> z_marginal);
std::vector<double> interventional_solution(const CbnModel& model, std::size_t o);

RankedDistribution intervene_solution(const CbnModel& model, std::string_view observation_text,
                                      std::size_t top_k);

/// Target population for transport: a known environment label or an explicit
/// distribution over the model's Z domain (label -> probability).
using TransportTarget = std::variant<std::string, std::map<std::string, double>>;

/// Resolves a target into a Z marginal. Throws Error{kLookup} for an unknown
/// environment and Error{kValidation} for a malformed distribution.
std::vector<double> target_z_marginal(const CbnModel& model, const TransportTarget& target);

RankedDistribution transport_solution(const CbnModel& model, const TransportTarget& target,
                                      std::string_view observation_text, std::size_t top_k);

enum class NoiseMode { kInterventional, kGumbelMax };
std::string_view to_string(NoiseMode mode);
std::optional<NoiseMode> parse_noise_mode(std::string_view name);

struct NoiseModel {
  NoiseMode mode = NoiseMode::kGumbelMax;
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
};

/// Counterfactual distribution of S had O been `alternative`, given a fully
/// observed factual case. Indices refer to the model's domains.
std::vector<double> counterfactual_solution(const CbnModel& model, const Assignment& factual,
                                            std::size_t alternative, const NoiseModel& noise);

/// Factual evidence must assign all four variables.
RankedDistribution recourse(const CbnModel& model, const Evidence& factual,
                            std::string_view alternative_text, const NoiseModel& noise);

/// Explicit truncated-product enumeration sum_{z,c} P(z)P(c|z)P(S|c,z,o) via
/// per-entry factor lookups. Refuses when |Z||C||S| > 1e6.
std::vector<double> enumerate_interventional_oracle(const CbnModel& model, std::size_t o);

/// Assignment lookup helpers.
Assignment resolve(const CbnModel& model, const Evidence& full);

}  // namespace rox
