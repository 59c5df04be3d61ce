#include "rox/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <thread>

#include "rox/error.hpp"
#include "rox/inference.hpp"

namespace rox {
namespace {

std::string padded(std::string_view prefix, std::size_t i, std::size_t n) {
  const std::size_t width = std::to_string(n > 0 ? n - 1 : 0).size();
  std::string digits = std::to_string(i);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return std::string(prefix) + digits;
}

std::vector<double> dirichlet(std::mt19937_64& rng, std::size_t k, double concentration) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> out(k);
  double sum = 0.0;
  for (double& x : out) {
    x = gamma(rng);
    sum += x;
  }
  if (!(sum > 0.0)) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(k));
    return out;
  }
  for (double& x : out) x /= sum;
  return out;
}

std::vector<double> uniform_over(std::size_t k, const std::vector<std::size_t>& members) {
  std::vector<double> out(k, 0.0);
  for (std::size_t m : members) out[m] += 1.0 / static_cast<double>(members.size());
  return out;
}

std::vector<std::size_t> owned(std::size_t k, std::size_t modulus, std::size_t owner) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i)
    if (i % modulus == owner) out.push_back(i);
  if (out.empty()) out.push_back(owner % k);
  return out;
}

// Mixes in a tiny uniform floor so every entry is strictly positive, then
// renormalizes.
void finish_row(std::vector<double>& row) {
  const double floor = 1e-9 / static_cast<double>(row.size());
  double sum = 0.0;
  for (double& x : row) {
    x = (1.0 - 1e-9) * x + floor;
    sum += x;
  }
  for (double& x : row) x /= sum;
}

constexpr std::size_t kKeywords = 4;

std::size_t sample(std::mt19937_64& rng, std::span<const double> p) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return p.size() - 1;
}

std::string render_text(std::mt19937_64& rng, std::string_view prefix, std::size_t category,
                        std::size_t domain, double noise_p) {
  auto keyword = [&](std::size_t cat, std::size_t slot) {
    return std::string(prefix) + std::to_string(cat) + "_kw" + std::to_string(slot + 1);
  };
  std::array<std::string, kKeywords> kw;
  for (std::size_t slot = 0; slot < kKeywords; ++slot) kw[slot] = keyword(category, slot);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  if (domain > 1 && uniform(rng) < noise_p) {
    std::uniform_int_distribution<std::size_t> pick_other(0, domain - 2);
    std::uniform_int_distribution<std::size_t> pick_slot(0, kKeywords - 1);
    std::size_t other = pick_other(rng);
    if (other >= category) ++other;
    const std::size_t slot = pick_slot(rng);
    kw[slot] = keyword(other, slot);
  }
  std::string out = kw[0];
  for (std::size_t slot = 1; slot < kKeywords; ++slot) out += " " + kw[slot];
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const GroundTruthSpec& spec, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kArgument, "generate_synthetic needs n >= 1");
  for (std::size_t s : spec.sizes)
    if (s == 0) throw Error(ErrorCode::kArgument, "domain sizes must be >= 1");
  if (!(spec.concentration > 0.0) || !(spec.env_concentration > 0.0))
    throw Error(ErrorCode::kArgument, "concentration must be > 0");
  if (spec.signal < 0.0 || spec.signal > 1.0 || spec.confounding < 0.0 || spec.confounding > 1.0 ||
      spec.noise_p < 0.0 || spec.noise_p > 1.0)
    throw Error(ErrorCode::kArgument, "signal, confounding and noise_p must lie in [0, 1]");
  if (spec.environments == 0) throw Error(ErrorCode::kArgument, "need at least one environment");

  const std::size_t nz = spec.sizes[idx(Var::Z)], nc = spec.sizes[idx(Var::C)];
  const std::size_t no = spec.sizes[idx(Var::O)], ns = spec.sizes[idx(Var::S)];
  std::mt19937_64 rng(spec.seed);

  std::map<std::string, std::vector<double>> env_marginals;
  std::vector<std::string> env_names;
  std::vector<double> pz(nz, 0.0);
  for (std::size_t e = 0; e < spec.environments; ++e) {
    auto m = dirichlet(rng, nz, spec.env_concentration);
    finish_row(m);
    for (std::size_t z = 0; z < nz; ++z) pz[z] += m[z] / static_cast<double>(spec.environments);
    env_names.push_back(padded("env_", e, spec.environments));
    env_marginals.emplace(env_names.back(), std::move(m));
  }

  std::vector<double> c_table;
  for (std::size_t z = 0; z < nz; ++z) {
    auto row = dirichlet(rng, nc, spec.concentration);
    finish_row(row);
    c_table.insert(c_table.end(), row.begin(), row.end());
  }

  std::vector<double> o_table;
  for (std::size_t c = 0; c < nc; ++c) {
    const auto by_cause = uniform_over(no, owned(no, nc, c));
    for (std::size_t z = 0; z < nz; ++z) {
      const auto by_z = uniform_over(no, owned(no, nz, z));
      auto row = dirichlet(rng, no, spec.concentration);
      for (std::size_t o = 0; o < no; ++o)
        row[o] = spec.signal * by_cause[o] +
                 (1.0 - spec.signal) * (spec.confounding * by_z[o] + (1.0 - spec.confounding) * row[o]);
      finish_row(row);
      o_table.insert(o_table.end(), row.begin(), row.end());
    }
  }

  std::vector<double> s_table;
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t z = 0; z < nz; ++z) {
      const auto by_z = uniform_over(ns, owned(ns, nz, z));
      for (std::size_t o = 0; o < no; ++o) {
        auto row = dirichlet(rng, ns, spec.concentration);
        for (std::size_t s = 0; s < ns; ++s)
          row[s] = spec.confounding * by_z[s] + (1.0 - spec.confounding) * row[s];
        finish_row(row);
        s_table.insert(s_table.end(), row.begin(), row.end());
      }
    }
  }

  std::vector<std::string> z_labels, c_labels;
  for (std::size_t z = 0; z < nz; ++z) z_labels.push_back(padded("subsystem_", z, nz));
  for (std::size_t c = 0; c < nc; ++c) c_labels.push_back(padded("cause_", c, nc));
  std::array<CategoricalDomain, kNumVars> domains = {
      CategoricalDomain(Var::Z, z_labels), CategoricalDomain(Var::C, c_labels),
      CategoricalDomain(Var::O, category_labels(no)), CategoricalDomain(Var::S, category_labels(ns))};

  SyntheticData out;
  out.truth = from_tables(std::move(domains), {pz, c_table, o_table, s_table}, env_marginals);

  std::uniform_int_distribution<std::size_t> pick_env(0, spec.environments - 1);
  std::vector<RoxRecord> records;
  records.reserve(n);
  out.tuples.reserve(n);
  std::vector<double> row;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t e = pick_env(rng);
    Assignment a{};
    a[idx(Var::Z)] = sample(rng, env_marginals.at(env_names[e]));
    for (Var v : {Var::C, Var::O, Var::S}) {
      row.resize(out.truth.domain(v).size());
      out.truth.cpt(v).row(a, row);
      a[idx(v)] = sample(rng, row);
    }
    RoxRecord r;
    r.record_id = std::to_string(i);
    r.environment = env_names[e];
    r.subsystem = z_labels[a[idx(Var::Z)]];
    r.root_cause = c_labels[a[idx(Var::C)]];
    r.observation = render_text(rng, "obs", a[idx(Var::O)], no, spec.noise_p);
    r.solution = render_text(rng, "sol", a[idx(Var::S)], ns, spec.noise_p);
    records.push_back(std::move(r));
    out.tuples.push_back({a, env_names[e]});
  }
  out.corpus = Corpus::from_records(std::move(records), "synthetic");
  return out;
}

double bayes_optimal_rca_accuracy(const CbnModel& truth) {
  const DomainSizes sizes = truth.sizes();
  double acc = 0.0;
  for (std::size_t o = 0; o < sizes[idx(Var::O)]; ++o) {
    double best = 0.0;
    for (std::size_t c = 0; c < sizes[idx(Var::C)]; ++c) {
      double joint_co = 0.0;
      for (std::size_t z = 0; z < sizes[idx(Var::Z)]; ++z) {
        const Assignment a = {z, c, o, 0};
        joint_co += truth.factor(Var::Z, a) * truth.factor(Var::C, a) * truth.factor(Var::O, a);
      }
      best = std::max(best, joint_co);
    }
    acc += best;
  }
  return acc;
}

MetricsReport score_predictions(std::span<const std::string> truth, std::span<const std::string> predicted) {
  if (truth.size() != predicted.size()) throw Error(ErrorCode::kArgument, "prediction count mismatch");
  struct Tally {
    std::size_t support = 0, predicted = 0, hits = 0;
  };
  std::map<std::string, Tally> tally;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++tally[truth[i]].support;
    ++tally[predicted[i]].predicted;
    if (truth[i] == predicted[i]) {
      ++tally[truth[i]].hits;
      ++correct;
    }
  }
  MetricsReport report;
  report.n_test = truth.size();
  if (truth.empty()) return report;
  report.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  for (const auto& [label, t] : tally) {
    if (t.support == 0) continue;
    ClassMetrics m;
    m.label = label;
    m.support = t.support;
    m.recall = static_cast<double>(t.hits) / static_cast<double>(t.support);
    m.precision = t.predicted == 0 ? 0.0 : static_cast<double>(t.hits) / static_cast<double>(t.predicted);
    report.macro_precision += m.precision;
    report.macro_recall += m.recall;
    report.per_class.push_back(std::move(m));
  }
  report.macro_precision /= static_cast<double>(report.per_class.size());
  report.macro_recall /= static_cast<double>(report.per_class.size());
  return report;
}

MetricsReport evaluate_rca(const CbnModel& model, const Corpus& test) {
  if (test.records.empty()) throw Error(ErrorCode::kArgument, "test corpus is empty");
  const std::size_t n = test.records.size();
  std::vector<std::string> truth(n), predicted(n);
  const std::size_t workers =
      std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 16);
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> failures(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w * chunk; i < std::min(n, (w + 1) * chunk); ++i) {
          truth[i] = test.records[i].root_cause;
          predicted[i] = rca(model, test.records[i].observation, 1).top().label;
        }
      } catch (...) {
        failures[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);
  return score_predictions(truth, predicted);
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error(ErrorCode::kArgument, "total_variation: size mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
  return 0.5 * d;
}

FidelityReport evaluate_causal_fidelity(const CbnModel& model, const CbnModel& truth) {
  for (Var v : kAllVars)
    if (model.domain(v).labels() != truth.domain(v).labels())
      throw Error(ErrorCode::kValidation, "domain mismatch for variable " + std::string(to_string(v)));
  const std::size_t no = truth.domain(Var::O).size();
  FidelityReport report;
  for (std::size_t o = 0; o < no; ++o)
    report.mean_tv_interventional +=
        total_variation(interventional_solution(model, o), interventional_solution(truth, o));
  report.mean_tv_interventional /= static_cast<double>(no);

  if (!truth.env_z_marginals.empty()) {
    const auto& [env, pz] = *truth.env_z_marginals.begin();
    double tv = 0.0;
    for (std::size_t o = 0; o < no; ++o)
      tv += total_variation(adjusted_solution(model, o, pz), adjusted_solution(truth, o, pz));
    report.mean_tv_transport = tv / static_cast<double>(no);
    report.transport_target = env;
  }
  return report;
}

ProtocolResult run_synthetic_protocol(const GroundTruthSpec& spec, std::size_t n, double train_fraction,
                                      const TrainOptions& options) {
  auto data = generate_synthetic(spec, n);
  auto [train, test] = split(data.corpus, train_fraction, spec.seed);
  ProtocolResult result;
  result.train_records = train.size();
  result.test_records = test.size();
  const CbnModel model = train_model(train, options);
  result.metrics = evaluate_rca(model, test);
  result.bayes_optimal = bayes_optimal_rca_accuracy(data.truth);
  return result;
}

}  // namespace rox
