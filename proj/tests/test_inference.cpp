#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "rox/error.hpp"
#include "rox/evaluation.hpp"
#include "rox/inference.hpp"
#include "rox/pipeline.hpp"

using namespace rox;

namespace {

using EvidenceIdx = std::array<std::optional<std::size_t>, kNumVars>;

// Generic P(query | evidence) by enumerating every assignment of the tables.
std::vector<double> enumerate_conditional(const oracle::Tables& t, Var query, const EvidenceIdx& ev) {
  std::vector<double> out(t.sizes[idx(query)], 0.0);
  double den = 0.0;
  Assignment a{};
  for (a[0] = 0; a[0] < t.sizes[0]; ++a[0])
    for (a[1] = 0; a[1] < t.sizes[1]; ++a[1])
      for (a[2] = 0; a[2] < t.sizes[2]; ++a[2])
        for (a[3] = 0; a[3] < t.sizes[3]; ++a[3]) {
          bool consistent = true;
          for (std::size_t v = 0; v < kNumVars; ++v)
            if (ev[v] && *ev[v] != a[v]) consistent = false;
          if (!consistent) continue;
          const double p = t.joint(a[0], a[1], a[2], a[3]);
          out[a[idx(query)]] += p;
          den += p;
        }
  for (double& x : out) x /= den;
  return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

int code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return static_cast<int>(e.code());
  }
  return -1;
}

}  // namespace

TEST_CASE("no evidence returns the prior over Z") {
  std::mt19937_64 rng(1);
  const auto t = oracle::random_tables(rng, {3, 2, 2, 2});
  const CbnModel m = oracle::to_model(t);
  const auto p = conditional_probabilities(m, Var::Z, {});
  CHECK(max_abs_diff(p, t.pz) <= 1e-12);
}

TEST_CASE("conditioning matches joint enumeration on random models") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = oracle::random_tables(rng, oracle::random_sizes(rng, 4, 6));
    const CbnModel m = oracle::to_model(t);
    for (std::size_t o = 0; o < t.sizes[2]; ++o) {
      Evidence ev;
      ev.o = std::to_string(o);
      const auto dist = conditional(m, Var::C, ev);
      const auto expected = oracle::cause_given_observation(t, o);
      for (const auto& e : dist.entries) CHECK(std::abs(e.probability - expected[e.index]) <= 1e-12);
    }
    // A few other query/evidence shapes through the same engine.
    EvidenceIdx ev{};
    ev[idx(Var::S)] = t.sizes[3] - 1;
    CHECK(max_abs_diff(conditional_probabilities(m, Var::Z, ev), enumerate_conditional(t, Var::Z, ev)) <= 1e-12);
    ev[idx(Var::C)] = 0;
    CHECK(max_abs_diff(conditional_probabilities(m, Var::O, ev), enumerate_conditional(t, Var::O, ev)) <= 1e-12);
  }
}

TEST_CASE("evidence on all other variables gives the renormalized factor product") {
  // 2x2x2x2 model; query C given z=1, o=0, s=1 by hand:
  // P(c | z, o, s) is proportional to P(c|z) P(o|c,z) P(s|c,z,o).
  std::mt19937_64 rng(9);
  const auto t = oracle::random_tables(rng, {2, 2, 2, 2});
  const CbnModel m = oracle::to_model(t);
  const double w0 = t.c(0, 1) * t.o(0, 0, 1) * t.s(1, 0, 1, 0);
  const double w1 = t.c(1, 1) * t.o(0, 1, 1) * t.s(1, 1, 1, 0);
  Evidence ev;
  ev.z = "z1";
  ev.o = "0";
  ev.s = "1";
  const auto dist = conditional(m, Var::C, ev);
  CHECK(std::abs(dist.probability_of(0) - w0 / (w0 + w1)) <= 1e-12);
  CHECK(std::abs(dist.probability_of(1) - w1 / (w0 + w1)) <= 1e-12);
}

TEST_CASE("querying an observed variable or an unknown label is rejected") {
  std::mt19937_64 rng(4);
  const CbnModel m = oracle::to_model(oracle::random_tables(rng, {2, 2, 2, 2}));
  Evidence ev;
  ev.c = "c0";
  CHECK_THROWS_AS(conditional(m, Var::C, ev), Error);
  ev.c = "nope";
  CHECK(code_of([&] { conditional(m, Var::Z, ev); }) == static_cast<int>(ErrorCode::kDomain));
}

TEST_CASE("ranked distributions are sorted with index tie-break and keep values after truncation") {
  const CategoricalDomain d(Var::C, {"a", "b", "c", "d"});
  const std::vector<double> p = {0.2, 0.4, 0.2, 0.2};
  const auto r = RankedDistribution::from_probabilities(Var::C, d, p);
  CHECK(r.entries[0].label == "b");
  CHECK(r.entries[1].label == "a");
  CHECK(r.entries[2].label == "c");
  CHECK(r.entries[3].label == "d");
  CHECK(std::abs(r.total - 1.0) <= 1e-12);
  const auto top2 = r.truncated(2);
  CHECK(top2.entries.size() == 2);
  CHECK(top2.entries[1].probability == 0.2);
  CHECK(top2.probability_of(3) == 0.0);
}

TEST_CASE("interventional adjustment equals the mutilated-graph enumeration") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = oracle::random_tables(rng, oracle::random_sizes(rng, 4, 6));
    const CbnModel m = oracle::to_model(t);
    for (std::size_t o = 0; o < t.sizes[2]; ++o) {
      const auto got = interventional_solution(m, o);
      CHECK(max_abs_diff(got, oracle::solution_under_do(t, o, t.pz)) <= 1e-12);
      const auto engine_oracle = enumerate_interventional_oracle(m, o);
      CHECK(max_abs_diff(got, engine_oracle) <= 1e-12);
      double sum = 0.0;
      for (double x : engine_oracle) sum += x;
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("without confounder variation doing equals seeing") {
  std::mt19937_64 rng(12);
  const auto t = oracle::random_tables(rng, {1, 1, 3, 4});
  const CbnModel m = oracle::to_model(t);
  for (std::size_t o = 0; o < 3; ++o) {
    std::vector<double> row(4);
    for (std::size_t s = 0; s < 4; ++s) row[s] = t.s(s, 0, 0, o);
    CHECK(max_abs_diff(interventional_solution(m, o), row) <= 1e-12);
    CHECK(max_abs_diff(enumerate_interventional_oracle(m, o), row) <= 1e-12);
    EvidenceIdx ev{};
    ev[idx(Var::O)] = o;
    CHECK(max_abs_diff(conditional_probabilities(m, Var::S, ev), row) <= 1e-12);
  }
}

TEST_CASE("oracle refuses oversized domains") {
  std::vector<std::string> many;
  for (int i = 0; i < 1001; ++i) many.push_back(std::to_string(i));
  std::array<CategoricalDomain, kNumVars> domains = {CategoricalDomain(Var::Z, many), CategoricalDomain(Var::C, many),
                                                     CategoricalDomain(Var::O, {"0"}), CategoricalDomain(Var::S, {"0", "1"})};
  std::vector<EncodedRecord> data(1);
  const CbnModel m = fit_counts(domains, data, FitOptions{});
  CHECK(code_of([&] { enumerate_interventional_oracle(m, 0); }) == static_cast<int>(ErrorCode::kOracleRefused));
}

TEST_CASE("pinned confounded model separates seeing from doing") {
  GroundTruthSpec spec;
  spec.sizes = {3, 3, 4, 5};
  spec.confounding = 0.8;
  spec.signal = 0.3;
  spec.seed = 3;
  const CbnModel m = generate_synthetic(spec, 1).truth;
  EvidenceIdx ev{};
  ev[idx(Var::O)] = 1;
  const auto see = conditional_probabilities(m, Var::S, ev);
  const auto act = interventional_solution(m, 1);
  const auto see_arg = std::max_element(see.begin(), see.end()) - see.begin();
  const auto do_arg = std::max_element(act.begin(), act.end()) - act.begin();
  CHECK(see_arg != do_arg);
  // Independent check of both quantities from factor lookups.
  std::vector<double> see_ref(5, 0.0), do_ref(5, 0.0);
  double den = 0.0;
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t s = 0; s < 5; ++s) {
        const Assignment a{z, c, 1, s};
        const double pzc = m.factor(Var::Z, a) * m.factor(Var::C, a);
        see_ref[s] += pzc * m.factor(Var::O, a) * m.factor(Var::S, a);
        den += pzc * m.factor(Var::O, a) * m.factor(Var::S, a);
        do_ref[s] += pzc * m.factor(Var::S, a);
      }
  for (double& x : see_ref) x /= den;
  CHECK(max_abs_diff(see, see_ref) <= 1e-12);
  CHECK(max_abs_diff(act, do_ref) <= 1e-12);
}

TEST_CASE("transport with the source marginal reproduces the interventional answer") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = oracle::random_tables(rng, oracle::random_sizes(rng, 4, 6));
    const CbnModel m = oracle::to_model(t);
    std::map<std::string, double> source;
    for (std::size_t z = 0; z < t.sizes[0]; ++z) source["z" + std::to_string(z)] = t.pz[z];
    const auto pz = target_z_marginal(m, source);
    for (std::size_t o = 0; o < t.sizes[2]; ++o)
      CHECK(max_abs_diff(adjusted_solution(m, o, pz), interventional_solution(m, o)) <= 1e-12);
  }
}

TEST_CASE("transport to a point mass is the closed form sum over causes") {
  std::mt19937_64 rng(6);
  const auto t = oracle::random_tables(rng, {3, 4, 2, 5});
  const CbnModel m = oracle::to_model(t);
  const std::size_t z0 = 2;
  const auto pz = target_z_marginal(m, std::map<std::string, double>{{"z2", 1.0}});
  for (std::size_t o = 0; o < 2; ++o) {
    std::vector<double> expected(5, 0.0);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t s = 0; s < 5; ++s) expected[s] += t.c(c, z0) * t.s(s, c, z0, o);
    CHECK(max_abs_diff(adjusted_solution(m, o, pz), expected) <= 1e-12);
  }
}

TEST_CASE("transport target validation") {
  std::mt19937_64 rng(7);
  const CbnModel m = oracle::to_model(oracle::random_tables(rng, {2, 2, 2, 2}), {{"fleet_a", {0.5, 0.5}}});
  try {
    target_z_marginal(m, std::string("fleet_x"));
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kLookup);
    CHECK(std::string(e.what()).find("fleet_a") != std::string::npos);
  }
  using Dist = std::map<std::string, double>;
  CHECK(code_of([&] { target_z_marginal(m, Dist{{"z0", 0.5}, {"z1", 0.4}}); }) == static_cast<int>(ErrorCode::kValidation));
  CHECK(code_of([&] { target_z_marginal(m, Dist{{"z0", 1.2}, {"z1", -0.2}}); }) == static_cast<int>(ErrorCode::kValidation));
  CHECK(code_of([&] { target_z_marginal(m, Dist{{"z9", 1.0}}); }) != -1);
  CHECK(target_z_marginal(m, Dist{{"z0", 0.3}, {"z1", 0.7 + 5e-7}})[1] == doctest::Approx(0.7 + 5e-7));
  CHECK(target_z_marginal(m, std::string("fleet_a")) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("transport agrees with refitting on target-reweighted data") {
  GroundTruthSpec spec;
  spec.sizes = {3, 4, 4, 5};
  spec.environments = 2;
  spec.env_concentration = 0.7;
  spec.confounding = 0.5;
  spec.seed = 21;
  const auto data = generate_synthetic(spec, 20000);
  std::array<CategoricalDomain, kNumVars> domains = data.truth.domains;
  const CbnModel pooled = fit_counts(domains, data.tuples, FitOptions{});
  const std::string target = "env_1";
  const auto& pb = pooled.env_z_marginals.at(target);
  const auto& pa = pooled.cpt(Var::Z);

  // Refit with every record weighted by P_B(z) / P_A(z) and evaluate the
  // adjustment on the weighted tables directly.
  const auto& sizes = data.truth.sizes();
  const std::size_t nz = sizes[0], nc = sizes[1], no = sizes[2], ns = sizes[3];
  const double alpha = FitOptions{}.alpha;
  std::vector<double> wz(nz, 0.0), wcz(nz * nc, 0.0), wsczo(nz * nc * no * ns, 0.0);
  for (const auto& r : data.tuples) {
    const auto [z, c, o, s] = r.values;
    const double w = pb[z] / pa.probability(r.values);
    wz[z] += w;
    wcz[z * nc + c] += w;
    wsczo[((z * nc + c) * no + o) * ns + s] += w;
  }
  double wtotal = 0.0;
  for (double x : wz) wtotal += x;
  auto refit_do = [&](std::size_t o) {
    std::vector<double> out(ns, 0.0);
    for (std::size_t z = 0; z < nz; ++z)
      for (std::size_t c = 0; c < nc; ++c) {
        const double p_c = (wcz[z * nc + c] + alpha) / (wz[z] + alpha * nc);
        // Unseen (c, z, o) backs off to the (c, z) solution counts.
        std::vector<double> counts(ns, 0.0);
        for (std::size_t s = 0; s < ns; ++s) counts[s] = wsczo[((z * nc + c) * no + o) * ns + s];
        double ctx = std::accumulate(counts.begin(), counts.end(), 0.0);
        if (ctx == 0.0) {
          for (std::size_t oo = 0; oo < no; ++oo)
            for (std::size_t s = 0; s < ns; ++s) counts[s] += wsczo[((z * nc + c) * no + oo) * ns + s];
          ctx = std::accumulate(counts.begin(), counts.end(), 0.0);
        }
        REQUIRE(ctx > 0.0);
        for (std::size_t s = 0; s < ns; ++s) out[s] += wz[z] / wtotal * p_c * (counts[s] + alpha) / (ctx + alpha * ns);
      }
    return out;
  };

  double mean_tv = 0.0;
  for (std::size_t o = 0; o < 4; ++o)
    mean_tv += oracle::total_variation(adjusted_solution(pooled, o, pb), refit_do(o)) / 4.0;
  MESSAGE("mean TV transport vs refit: " << mean_tv);
  CHECK(mean_tv <= 0.02);
}

TEST_CASE("counterfactual with the factual observation returns the factual solution") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto t = oracle::random_tables(rng, oracle::random_sizes(rng, 3, 5));
    const CbnModel m = oracle::to_model(t);
    const Assignment factual{0, 0, 0, t.sizes[3] - 1};
    NoiseModel noise;
    noise.samples = 10000;
    noise.seed = static_cast<std::uint64_t>(trial);
    const auto p = counterfactual_solution(m, factual, 0, noise);
    CHECK(p[factual[3]] >= 1.0 - 3.0 / std::sqrt(10000.0));
  }
}

TEST_CASE("interventional noise mode returns the plain row") {
  std::mt19937_64 rng(10);
  const auto t = oracle::random_tables(rng, {2, 2, 2, 3});
  const CbnModel m = oracle::to_model(t);
  NoiseModel noise;
  noise.mode = NoiseMode::kInterventional;
  const auto p = counterfactual_solution(m, {1, 0, 1, 2}, 1, noise);
  for (std::size_t s = 0; s < 3; ++s) CHECK(p[s] == doctest::Approx(t.s(s, 0, 1, 1)).epsilon(1e-15));
  CHECK(p[2] < 1.0);
}

TEST_CASE("gumbel-max counterfactual matches the rejection oracle on a 2x2x2x2 model") {
  std::mt19937_64 rng(11);
  const auto t = oracle::random_tables(rng, {2, 2, 2, 2});
  const CbnModel m = oracle::to_model(t);
  for (const Assignment factual : {Assignment{0, 1, 0, 1}, Assignment{1, 0, 1, 0}}) {
    const std::size_t alt = 1 - factual[2];
    std::vector<double> p(2), q(2);
    for (std::size_t s = 0; s < 2; ++s) {
      p[s] = t.s(s, factual[1], factual[0], factual[2]);
      q[s] = t.s(s, factual[1], factual[0], alt);
    }
    const auto expected = oracle::gumbel_rejection(p, q, factual[3], 10'000'000, 1234);
    NoiseModel noise;
    noise.samples = 100'000;
    noise.seed = 42;
    const auto got = counterfactual_solution(m, factual, alt, noise);
    CHECK(oracle::total_variation(got, expected) <= 0.02);
  }
}

TEST_CASE("gumbel-max matches the rejection oracle on wider solution domains") {
  std::mt19937_64 rng(13);
  const auto t = oracle::random_tables(rng, {2, 2, 2, 5});
  const CbnModel m = oracle::to_model(t);
  const Assignment factual{1, 1, 0, 3};
  std::vector<double> p(5), q(5);
  for (std::size_t s = 0; s < 5; ++s) {
    p[s] = t.s(s, 1, 1, 0);
    q[s] = t.s(s, 1, 1, 1);
  }
  const auto expected = oracle::gumbel_rejection(p, q, 3, 2'000'000, 5);
  NoiseModel noise;
  noise.samples = 100'000;
  noise.seed = 6;
  CHECK(oracle::total_variation(counterfactual_solution(m, factual, 1, noise), expected) <= 0.02);
}

TEST_CASE("noise model validation and determinism") {
  std::mt19937_64 rng(14);
  const CbnModel m = oracle::to_model(oracle::random_tables(rng, {2, 2, 2, 3}));
  NoiseModel noise;
  noise.samples = 999;
  CHECK(code_of([&] { counterfactual_solution(m, {0, 0, 0, 0}, 1, noise); }) == static_cast<int>(ErrorCode::kArgument));
  noise.samples = 2000;
  noise.seed = 3;
  CHECK(counterfactual_solution(m, {0, 0, 0, 0}, 1, noise) == counterfactual_solution(m, {0, 0, 0, 0}, 1, noise));
  CHECK(code_of([&] { counterfactual_solution(m, {0, 5, 0, 0}, 1, noise); }) == static_cast<int>(ErrorCode::kDomain));
  CHECK(parse_noise_mode("gumbel_max") == NoiseMode::kGumbelMax);
  CHECK(parse_noise_mode("interventional") == NoiseMode::kInterventional);
  CHECK_FALSE(parse_noise_mode("twin"));
  CHECK(to_string(NoiseMode::kGumbelMax) == "gumbel_max");
}

TEST_CASE("recourse needs all four factual labels") {
  std::mt19937_64 rng(15);
  const CbnModel m = oracle::to_model(oracle::random_tables(rng, {2, 2, 2, 2}));
  Evidence partial;
  partial.z = "z0";
  partial.c = "c1";
  CHECK_THROWS_AS(resolve(m, partial), Error);
  partial.o = "0";
  partial.s = "1";
  CHECK(resolve(m, partial) == Assignment{0, 1, 0, 1});
}

TEST_CASE("text-level queries on a trained fixture model") {
  const auto corpus = ingest_file(ROX_TEST_DATA_DIR "/fixture.jsonl").corpus;
  const CbnModel m = train_model(corpus, TrainOptions{});
  const auto& rec = corpus.records.front();

  const auto causes = rca(m, rec.observation, 3);
  CHECK(causes.entries.size() == 3);
  CHECK(causes.variable == Var::C);
  CHECK(std::is_sorted(causes.entries.begin(), causes.entries.end(),
                       [](const auto& a, const auto& b) { return a.probability > b.probability; }));
  const auto full = rca(m, rec.observation, 100);
  CHECK(std::abs(full.total - 1.0) <= 1e-9);
  CHECK(causes.entries[0] == full.entries[0]);

  const auto with_z = rca(m, rec.observation, 100, rec.subsystem);
  for (const auto& e : with_z.entries) CHECK(e.probability > 0.0);
  CHECK(code_of([&] { rca(m, rec.observation, 3, std::string("no-such-subsystem")); }) ==
        static_cast<int>(ErrorCode::kDomain));

  const auto sols = intervene_solution(m, rec.observation, 100);
  CHECK(std::abs(sols.total - 1.0) <= 1e-9);
  const auto moved = transport_solution(m, std::string("fleet_b"), rec.observation, 100);
  CHECK(std::abs(moved.total - 1.0) <= 1e-9);

  // An empty observation is still assignable.
  CHECK(rca(m, "", 1).entries.size() == 1);

  Evidence factual;
  factual.z = rec.subsystem;
  factual.c = rec.root_cause;
  factual.o = std::to_string(m.encode_observation(rec.observation));
  factual.s = std::to_string(m.encode_solution(rec.solution));
  const auto same = recourse(m, factual, rec.observation, NoiseModel{});
  CHECK(same.top().label == *factual.s);
  CHECK(same.top().probability >= 1.0 - 3.0 / std::sqrt(10000.0));
}

TEST_CASE("single-cause domain gives certainty") {
  std::vector<EncodedRecord> data(4);
  std::array<CategoricalDomain, kNumVars> domains = {CategoricalDomain(Var::Z, {"z"}), CategoricalDomain(Var::C, {"only"}),
                                                     CategoricalDomain(Var::O, {"0", "1"}), CategoricalDomain(Var::S, {"0"})};
  const CbnModel m = fit_counts(domains, data, FitOptions{});
  Evidence ev;
  ev.o = "1";
  const auto d = conditional(m, Var::C, ev);
  REQUIRE(d.entries.size() == 1);
  CHECK(d.entries[0].probability == 1.0);
}

TEST_CASE("rca top-1 agrees with the true model's argmax on synthetic data") {
  GroundTruthSpec spec;
  spec.sizes = {3, 6, 12, 8};
  spec.signal = 0.6;
  spec.concentration = 0.5;
  spec.seed = 19;
  const auto data = generate_synthetic(spec, 6000);
  const auto [train, test] = split(data.corpus, 5.0 / 6.0, 19);
  TrainOptions options;
  options.observation_clusters.distance_threshold = 0.25;
  options.solution_clusters.distance_threshold = 0.25;
  const CbnModel m = train_model(train, options);
  std::size_t agree = 0, n = 0;
  for (const auto& r : test.records) {
    if (n == 1000) break;
    const std::size_t o = static_cast<std::size_t>(std::stoul(r.record_id));
    EvidenceIdx ev{};
    ev[idx(Var::O)] = data.tuples[o].values[idx(Var::O)];
    const auto truth = conditional_probabilities(data.truth, Var::C, ev);
    const auto best = static_cast<std::size_t>(std::max_element(truth.begin(), truth.end()) - truth.begin());
    agree += rca(m, r.observation, 1).top().label == data.truth.domain(Var::C).label(best);
    ++n;
  }
  MESSAGE("agreement with the Bayes-optimal argmax: " << static_cast<double>(agree) / n);
  CHECK(static_cast<double>(agree) / n >= 0.95);
}
