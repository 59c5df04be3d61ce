#include "rox/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rox/error.hpp"

namespace rox {
namespace {

using EvidenceIdx = std::array<std::optional<std::size_t>, kNumVars>;

EvidenceIdx to_indices(const CbnModel& model, const Evidence& evidence) {
  EvidenceIdx out;
  for (Var v : kAllVars)
    if (const auto& label = evidence.get(v)) out[idx(v)] = model.domain(v).index(*label);
  return out;
}

void normalize(std::vector<double>& p) {
  const double sum = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(sum > 0.0)) throw Error(ErrorCode::kConsistency, "distribution has zero mass");
  for (double& x : p) x /= sum;
}

std::size_t observation_index(const CbnModel& model, std::string_view text) {
  const std::size_t o = model.encode_observation(text);
  if (o >= model.domain(Var::O).size())
    throw Error(ErrorCode::kConsistency, "observation category outside the O domain");
  return o;
}

// Standard Gumbel draw; uniform 0 is rejected so the log stays finite.
double gumbel(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  double u = 0.0;
  do {
    u = uniform(rng);
  } while (u <= 0.0);
  return -std::log(-std::log(u));
}

}  // namespace

const std::optional<std::string>& Evidence::get(Var v) const {
  switch (v) {
    case Var::Z: return z;
    case Var::C: return c;
    case Var::O: return o;
    case Var::S: return s;
  }
  return z;
}

std::optional<std::string>& Evidence::get(Var v) {
  return const_cast<std::optional<std::string>&>(std::as_const(*this).get(v));
}

RankedDistribution RankedDistribution::from_probabilities(Var variable, const CategoricalDomain& domain,
                                                          std::span<const double> probabilities) {
  if (probabilities.size() != domain.size())
    throw Error(ErrorCode::kArgument, "probability vector does not match domain size");
  RankedDistribution out;
  out.variable = variable;
  out.entries.reserve(probabilities.size());
  for (std::size_t i = 0; i < probabilities.size(); ++i)
    out.entries.push_back({domain.label(i), i, probabilities[i]});
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const RankedEntry& a, const RankedEntry& b) { return a.probability > b.probability; });
  out.total = 0.0;
  for (const auto& e : out.entries) out.total += e.probability;
  return out;
}

RankedDistribution RankedDistribution::truncated(std::size_t top_k) const {
  RankedDistribution out = *this;
  if (out.entries.size() > top_k) out.entries.resize(top_k);
  out.total = 0.0;
  for (const auto& e : out.entries) out.total += e.probability;
  return out;
}

double RankedDistribution::probability_of(std::size_t index) const {
  for (const auto& e : entries)
    if (e.index == index) return e.probability;
  return 0.0;
}

std::vector<double> conditional_probabilities(const CbnModel& model, Var query, const EvidenceIdx& evidence) {
  if (evidence[idx(query)])
    throw Error(ErrorCode::kArgument, "query variable " + std::string(to_string(query)) + " is also evidence");
  const DomainSizes sizes = model.sizes();
  for (Var v : kAllVars)
    if (evidence[idx(v)] && *evidence[idx(v)] >= sizes[idx(v)])
      throw Error(ErrorCode::kDomain, "evidence index out of range for " + std::string(to_string(v)));

  // The graph is complete in topological order, so the ancestral set of the
  // query and evidence is every variable up to the deepest one involved.
  std::size_t last = idx(query);
  for (Var v : kAllVars)
    if (evidence[idx(v)]) last = std::max(last, idx(v));
  const Var last_var = kAllVars[last];

  std::vector<double> result(sizes[idx(query)], 0.0);
  std::vector<double> row(sizes[last]);
  Assignment a{};

  auto visit = [&](auto&& self, std::size_t depth, double weight) -> void {
    if (depth == last) {
      model.cpt(last_var).row(a, row);
      if (last_var == query) {
        for (std::size_t x = 0; x < row.size(); ++x) result[x] += weight * row[x];
      } else {
        result[a[idx(query)]] += weight * row[*evidence[last]];
      }
      return;
    }
    const Var v = kAllVars[depth];
    if (evidence[depth]) {
      a[depth] = *evidence[depth];
      self(self, depth + 1, weight * model.factor(v, a));
      return;
    }
    for (std::size_t x = 0; x < sizes[depth]; ++x) {
      a[depth] = x;
      self(self, depth + 1, weight * model.factor(v, a));
    }
  };
  visit(visit, 0, 1.0);
  normalize(result);
  return result;
}

RankedDistribution conditional(const CbnModel& model, Var query, const Evidence& evidence) {
  const auto p = conditional_probabilities(model, query, to_indices(model, evidence));
  return RankedDistribution::from_probabilities(query, model.domain(query), p);
}

RankedDistribution rca(const CbnModel& model, std::string_view observation_text, std::size_t top_k,
                       std::optional<std::string> subsystem) {
  if (top_k == 0) throw Error(ErrorCode::kArgument, "top_k must be >= 1");
  EvidenceIdx evidence;
  evidence[idx(Var::O)] = observation_index(model, observation_text);
  if (subsystem) evidence[idx(Var::Z)] = model.domain(Var::Z).index(*subsystem);
  const auto p = conditional_probabilities(model, Var::C, evidence);
  return RankedDistribution::from_probabilities(Var::C, model.domain(Var::C), p).truncated(top_k);
}

std::vector<double> adjusted_solution(const CbnModel& model, std::size_t o,
                                      std::span<const double> z_marginal) {
  const DomainSizes sizes = model.sizes();
  if (o >= sizes[idx(Var::O)]) throw Error(ErrorCode::kDomain, "observation index out of range");
  if (z_marginal.size() != sizes[idx(Var::Z)])
    throw Error(ErrorCode::kValidation, "Z marginal does not match the Z domain");
  std::vector<double> result(sizes[idx(Var::S)], 0.0);
  std::vector<double> row(sizes[idx(Var::S)]);
  Assignment a{};
  a[idx(Var::O)] = o;
  for (std::size_t z = 0; z < sizes[idx(Var::Z)]; ++z) {
    a[idx(Var::Z)] = z;
    for (std::size_t c = 0; c < sizes[idx(Var::C)]; ++c) {
      a[idx(Var::C)] = c;
      const double w = model.factor(Var::C, a) * z_marginal[z];
      model.cpt(Var::S).row(a, row);
      for (std::size_t s = 0; s < row.size(); ++s) result[s] += w * row[s];
    }
  }
  normalize(result);
  return result;
}

std::vector<double> interventional_solution(const CbnModel& model, std::size_t o) {
  const std::size_t nz = model.domain(Var::Z).size();
  std::vector<double> pz(nz);
  Assignment a{};
  for (std::size_t z = 0; z < nz; ++z) {
    a[idx(Var::Z)] = z;
    pz[z] = model.factor(Var::Z, a);
  }
  return adjusted_solution(model, o, pz);
}

RankedDistribution intervene_solution(const CbnModel& model, std::string_view observation_text,
                                      std::size_t top_k) {
  if (top_k == 0) throw Error(ErrorCode::kArgument, "top_k must be >= 1");
  const auto p = interventional_solution(model, observation_index(model, observation_text));
  return RankedDistribution::from_probabilities(Var::S, model.domain(Var::S), p).truncated(top_k);
}

std::vector<double> target_z_marginal(const CbnModel& model, const TransportTarget& target) {
  if (const auto* env = std::get_if<std::string>(&target)) {
    auto it = model.env_z_marginals.find(*env);
    if (it == model.env_z_marginals.end()) {
      std::string known;
      for (const auto& [name, _] : model.env_z_marginals) known += (known.empty() ? "" : ", ") + name;
      throw Error(ErrorCode::kLookup, "unknown environment '" + *env + "'; known environments: " + known);
    }
    return it->second;
  }
  const auto& dist = std::get<std::map<std::string, double>>(target);
  const auto& zdom = model.domain(Var::Z);
  std::vector<double> pz(zdom.size(), 0.0);
  double sum = 0.0;
  for (const auto& [label, p] : dist) {
    auto i = zdom.find(label);
    if (!i) throw Error(ErrorCode::kValidation, "Z distribution names unknown subsystem '" + label + "'");
    if (!(p >= 0.0) || !std::isfinite(p))
      throw Error(ErrorCode::kValidation, "Z distribution has a negative or non-finite entry");
    pz[*i] = p;
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw Error(ErrorCode::kValidation, "Z distribution sums to " + std::to_string(sum) + ", expected 1");
  return pz;
}

RankedDistribution transport_solution(const CbnModel& model, const TransportTarget& target,
                                      std::string_view observation_text, std::size_t top_k) {
  if (top_k == 0) throw Error(ErrorCode::kArgument, "top_k must be >= 1");
  const auto pz = target_z_marginal(model, target);
  const auto p = adjusted_solution(model, observation_index(model, observation_text), pz);
  return RankedDistribution::from_probabilities(Var::S, model.domain(Var::S), p).truncated(top_k);
}

std::string_view to_string(NoiseMode mode) {
  return mode == NoiseMode::kInterventional ? "interventional" : "gumbel_max";
}

std::optional<NoiseMode> parse_noise_mode(std::string_view name) {
  if (name == "interventional") return NoiseMode::kInterventional;
  if (name == "gumbel_max") return NoiseMode::kGumbelMax;
  return std::nullopt;
}

std::vector<double> counterfactual_solution(const CbnModel& model, const Assignment& factual,
                                            std::size_t alternative, const NoiseModel& noise) {
  const DomainSizes sizes = model.sizes();
  for (Var v : kAllVars)
    if (factual[idx(v)] >= sizes[idx(v)])
      throw Error(ErrorCode::kDomain, "factual index out of range for " + std::string(to_string(v)));
  if (alternative >= sizes[idx(Var::O)]) throw Error(ErrorCode::kDomain, "alternative O out of range");

  const std::size_t ns = sizes[idx(Var::S)];
  Assignment action = factual;
  action[idx(Var::O)] = alternative;
  std::vector<double> q(ns);
  model.cpt(Var::S).row(action, q);
  if (noise.mode == NoiseMode::kInterventional) return q;

  if (noise.samples < 1000) throw Error(ErrorCode::kArgument, "gumbel_max needs at least 1000 samples");
  std::vector<double> p(ns);
  model.cpt(Var::S).row(factual, p);
  const std::size_t sf = factual[idx(Var::S)];
  std::vector<double> logp(ns), logq(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    logp[s] = std::log(p[s]);
    logq[s] = std::log(q[s]);
  }

  // Abduction samples the Gumbel noise posterior given argmax = s_f: the
  // maximum is Gumbel(log sum p) = Gumbel(0), the others are Gumbels with
  // location log p_s truncated below it. Action swaps in the row for the
  // alternative observation; prediction re-takes the argmax under that noise.
  std::mt19937_64 rng(noise.seed);
  std::vector<double> counts(ns, 0.0);
  std::vector<double> value(ns);
  for (std::size_t n = 0; n < noise.samples; ++n) {
    const double top = gumbel(rng);
    for (std::size_t s = 0; s < ns; ++s) {
      double perturbed;
      if (s == sf) {
        perturbed = top;
      } else {
        const double g = logp[s] + gumbel(rng);
        const double d = top - g;
        perturbed = d >= 0.0 ? g - std::log1p(std::exp(-d)) : top - std::log1p(std::exp(d));
      }
      value[s] = logq[s] + (perturbed - logp[s]);
    }
    // The factual outcome wins exact ties, then the smallest index.
    std::size_t best = sf;
    for (std::size_t s = 0; s < ns; ++s)
      if (value[s] > value[best] || (value[s] == value[best] && s < best && best != sf)) best = s;
    counts[best] += 1.0;
  }
  for (double& c : counts) c /= static_cast<double>(noise.samples);
  return counts;
}

Assignment resolve(const CbnModel& model, const Evidence& full) {
  Assignment a{};
  for (Var v : kAllVars) {
    const auto& label = full.get(v);
    if (!label)
      throw Error(ErrorCode::kArgument, "factual evidence must assign " + std::string(to_string(v)));
    a[idx(v)] = model.domain(v).index(*label);
  }
  return a;
}

RankedDistribution recourse(const CbnModel& model, const Evidence& factual,
                            std::string_view alternative_text, const NoiseModel& noise) {
  const Assignment a = resolve(model, factual);
  const std::size_t alt = observation_index(model, alternative_text);
  const auto p = counterfactual_solution(model, a, alt, noise);
  return RankedDistribution::from_probabilities(Var::S, model.domain(Var::S), p);
}

std::vector<double> enumerate_interventional_oracle(const CbnModel& model, std::size_t o) {
  const DomainSizes sizes = model.sizes();
  const double cells = static_cast<double>(sizes[idx(Var::Z)]) * static_cast<double>(sizes[idx(Var::C)]) *
                       static_cast<double>(sizes[idx(Var::S)]);
  if (cells > 1e6) throw Error(ErrorCode::kOracleRefused, "interventional oracle refuses |Z||C||S| > 1e6");
  if (o >= sizes[idx(Var::O)]) throw Error(ErrorCode::kDomain, "observation index out of range");
  std::vector<double> out(sizes[idx(Var::S)], 0.0);
  for (std::size_t s = 0; s < sizes[idx(Var::S)]; ++s) {
    for (std::size_t z = 0; z < sizes[idx(Var::Z)]; ++z) {
      for (std::size_t c = 0; c < sizes[idx(Var::C)]; ++c) {
        const Assignment a = {z, c, o, s};
        out[s] += model.factor(Var::Z, a) * model.factor(Var::C, a) * model.factor(Var::S, a);
      }
    }
  }
  return out;
}

}  // namespace rox
