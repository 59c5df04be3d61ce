#include <benchmark/benchmark.h>

#include <random>

#include "rox/evaluation.hpp"
#include "rox/inference.hpp"
#include "rox/pipeline.hpp"

namespace {

// One trained model on a 20-cause synthetic corpus, shared by the query
// benchmarks.
struct Fixture {
  rox::SyntheticData data;
  rox::CbnModel model;

  Fixture() {
    rox::GroundTruthSpec spec;
    spec.sizes = {5, 20, 40, 60};
    spec.concentration = 0.3;
    spec.signal = 0.9;
    spec.confounding = 0.3;
    spec.noise_p = 0.02;
    spec.environments = 2;
    spec.seed = 1;
    data = rox::generate_synthetic(spec, 20000);
    rox::TrainOptions options;
    options.observation_clusters.distance_threshold = 0.25;
    options.solution_clusters.distance_threshold = 0.25;
    model = rox::train_model(data.corpus, options);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_Rca(benchmark::State& state) {
  const auto& f = fixture();
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& text = f.data.corpus.records[i++ % f.data.corpus.size()].observation;
    benchmark::DoNotOptimize(rox::rca(f.model, text, 5));
  }
}
BENCHMARK(BM_Rca);

void BM_InterveneSolution(benchmark::State& state) {
  const auto& f = fixture();
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& text = f.data.corpus.records[i++ % f.data.corpus.size()].observation;
    benchmark::DoNotOptimize(rox::intervene_solution(f.model, text, 5));
  }
}
BENCHMARK(BM_InterveneSolution);

void BM_GumbelCounterfactual(benchmark::State& state) {
  const auto& f = fixture();
  const rox::Assignment factual = f.data.tuples.front().values;
  rox::NoiseModel noise;
  noise.samples = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(rox::counterfactual_solution(f.model, factual, 0, noise));
  }
}
BENCHMARK(BM_GumbelCounterfactual)->Arg(1000)->Arg(10000);

void BM_FitCodebook(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  // Twenty bundles of near-duplicate points in 64 dimensions.
  std::vector<std::vector<double>> centers(20, std::vector<double>(64));
  for (auto& c : centers)
    for (double& x : c) x = normal(rng);
  std::vector<rox::EmbeddingVector> points;
  for (std::size_t i = 0; i < n; ++i) {
    rox::EmbeddingVector v;
    v.values = centers[i % centers.size()];
    for (double& x : v.values) x += 0.05 * normal(rng);
    points.push_back(std::move(v));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(rox::fit_codebook(points, rox::ClusterParams{}));
  }
}
BENCHMARK(BM_FitCodebook)->Arg(1000)->Arg(4000);

void BM_TrainModel(benchmark::State& state) {
  rox::GroundTruthSpec spec;
  spec.sizes = {5, 20, 40, 60};
  spec.signal = 0.9;
  const auto data = rox::generate_synthetic(spec, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(rox::train_model(data.corpus, rox::TrainOptions{}));
  }
}
BENCHMARK(BM_TrainModel)->Arg(4000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
