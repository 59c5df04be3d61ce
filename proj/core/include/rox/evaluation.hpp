#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rox/corpus.hpp"
#include "rox/model.hpp"
#include "rox/pipeline.hpp"

namespace rox {

/// Recipe for a random ground-truth network and its pseudo-text corpus.
///
/// Rows are mixtures of structured blocks and Dirichlet(concentration) noise:
///  - P(O|c,z) puts `signal` on the observations owned by cause c
///    (o mod |C| == c) and `confounding` of the remainder on those owned by
///    subsystem z (o mod |Z| == z);
///  - P(S|c,z,o) puts `confounding` on solutions owned by z.
/// Observation o is rendered as "obs<o>_kw1 ... obs<o>_kw4" (solutions
/// likewise with "sol"); with probability `noise_p` one of the four keywords
/// is swapped for another category's.
struct GroundTruthSpec {
  DomainSizes sizes{3, 4, 6, 8};
  double concentration = 1.0;
  double signal = 0.0;
  double confounding = 0.0;
  double noise_p = 0.0;
  std::size_t environments = 1;
  double env_concentration = 1.0;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Corpus corpus;
  CbnModel truth;                      // explicit tables; O/S labels "0".."n-1"
  std::vector<EncodedRecord> tuples;   // the sampled (z, c, o, s) behind each record
};

/// Throws Error{kArgument} for n == 0 or an invalid spec.
SyntheticData generate_synthetic(const GroundTruthSpec& spec, std::size_t n);

/// Expected top-1 accuracy of argmax_c P(c|o) under the true model when the
/// true observation category is known.
double bayes_optimal_rca_accuracy(const CbnModel& truth);

struct ClassMetrics {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t support = 0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  std::vector<ClassMetrics> per_class;  // labels with nonzero support, sorted
  std::size_t n_test = 0;
};

/// Order-independent scoring of top-1 predictions; macro averages run over
/// labels with nonzero support.
MetricsReport score_predictions(std::span<const std::string> truth, std::span<const std::string> predicted);

/// Top-1 rca prediction against each record's root_cause.
MetricsReport evaluate_rca(const CbnModel& model, const Corpus& test);

struct FidelityReport {
  double mean_tv_interventional = 0.0;
  std::optional<double> mean_tv_transport;
  std::string transport_target;
};

double total_variation(std::span<const double> p, std::span<const double> q);

/// Mean total variation between P(S|do(O=o)) of `model` and `truth` over all
/// o, and the same for one transport target (the truth's first environment)
/// when the truth has environment marginals. Domains must match exactly.
FidelityReport evaluate_causal_fidelity(const CbnModel& model, const CbnModel& truth);

struct ProtocolResult {
  MetricsReport metrics;
  double bayes_optimal = 0.0;
  std::size_t train_records = 0;
  std::size_t test_records = 0;
};

/// generate -> stratified split -> train_model -> evaluate_rca.
ProtocolResult run_synthetic_protocol(const GroundTruthSpec& spec, std::size_t n, double train_fraction,
                                      const TrainOptions& options);

}  // namespace rox
