#include "rox/pipeline.hpp"

#include "hashing.hpp"
#include "rox/advisory.hpp"
#include "rox/error.hpp"

namespace rox {

CbnModel train_model(const Corpus& corpus, const TrainOptions& options, TrainSummary* summary) {
  if (corpus.records.empty()) throw Error(ErrorCode::kEmptyCorpus, "training corpus is empty");

  std::vector<CleanText> observations, solutions;
  observations.reserve(corpus.size());
  solutions.reserve(corpus.size());
  for (const auto& r : corpus.records) {
    observations.push_back(clean_text(r.observation, options.text, r.record_id));
    solutions.push_back(clean_text(r.solution, options.text, r.record_id));
  }

  const std::uint64_t obs_seed = detail::splitmix64(options.seed ^ 0x6f6273ULL);
  const std::uint64_t sol_seed = detail::splitmix64(options.seed ^ 0x736f6cULL);
  auto obs = fit_quantizer(Field::kObservation, observations, options.embedder, options.reduced_dim,
                           obs_seed, options.observation_clusters);
  auto sol = fit_quantizer(Field::kSolution, solutions, options.embedder, options.reduced_dim,
                           sol_seed, options.solution_clusters);

  FitOptions fit_options;
  fit_options.alpha = options.alpha;
  fit_options.seed = options.seed;
  fit_options.fitted_at = options.fitted_at;
  CbnModel model = fit(corpus, obs.quantizer, sol.quantizer, options.text, fit_options);
  model.solution_index = build_index(corpus, sol.quantizer, options.text);

  if (summary) {
    summary->records = corpus.size();
    summary->sizes = model.sizes();
    summary->observation_noise = 0;
    summary->solution_noise = 0;
    for (const auto& m : obs.membership) summary->observation_noise += m.noise ? 1 : 0;
    for (const auto& m : sol.membership) summary->solution_noise += m.noise ? 1 : 0;
    summary->environments = corpus.environments.size();
  }
  return model;
}

}  // namespace rox
