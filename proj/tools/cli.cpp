#include "cli.hpp"

#include <signal.h>
#include <sys/stat.h>

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "rox/advisory.hpp"
#include "rox/error.hpp"
#include "rox/evaluation.hpp"
#include "rox/inference.hpp"
#include "rox/pipeline.hpp"
#include "rox/service.hpp"

namespace rox::cli {
namespace {

using nlohmann::json;

// Failure tagged with the pipeline stage it came from.
struct StageError {
  std::string stage;
  std::string message;
};

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw StageError{name, e.what()};
  } catch (const std::exception& e) {
    throw StageError{name, e.what()};
  }
}

std::string iso8601_utc(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// SOURCE_DATE_EPOCH wins so that builds from identical inputs are
// reproducible; otherwise the data file's modification time.
std::string fit_timestamp(const std::string& data_path) {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      return iso8601_utc(static_cast<std::time_t>(std::stoll(epoch)));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfiguration, "SOURCE_DATE_EPOCH is not an integer");
    }
  }
  struct stat st{};
  if (::stat(data_path.c_str(), &st) != 0) return iso8601_utc(0);
  return iso8601_utc(st.st_mtime);
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void print_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << "  ";
      if (i + 1 == cells.size())
        out << cells[i];
      else
        out << std::left << std::setw(static_cast<int>(width[i])) << cells[i];
    }
    out << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (std::size_t w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& r : rows) line(r);
}

json ranked_json(const RankedDistribution& dist) {
  json out = json::array();
  for (const auto& e : dist.entries) out.push_back({{"label", e.label}, {"probability", e.probability}});
  return out;
}

void print_ranked(std::ostream& out, const std::string& header, const RankedDistribution& dist) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : dist.entries) rows.push_back({e.label, fixed(e.probability)});
  print_table(out, {header, "Probability"}, rows);
}

CbnModel load_model(const std::string& path) {
  return stage("load model", [&] { return load_file(path); });
}

json metrics_json(const MetricsReport& m) {
  json per_class = json::array();
  for (const auto& c : m.per_class)
    per_class.push_back({{"label", c.label}, {"precision", c.precision}, {"recall", c.recall}, {"support", c.support}});
  return {{"accuracy", m.accuracy},
          {"macro_precision", m.macro_precision},
          {"macro_recall", m.macro_recall},
          {"n_test", m.n_test},
          {"per_class", per_class}};
}

DomainSizes parse_sizes(const std::string& text) {
  DomainSizes sizes{};
  std::stringstream ss(text);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ',')) {
    if (i == kNumVars) throw Error(ErrorCode::kArgument, "--sizes takes exactly four values Z,C,O,S");
    sizes[i++] = std::stoul(part);
  }
  if (i != kNumVars) throw Error(ErrorCode::kArgument, "--sizes takes exactly four values Z,C,O,S");
  return sizes;
}

struct SyntheticFlags {
  std::string sizes = "5,20,40,60";
  double concentration = 0.3;
  double signal = 0.9;
  double confounding = 0.3;
  double noise_p = 0.02;
  std::size_t environments = 2;
  std::uint64_t seed = 0;
  std::size_t n = 20000;

  void add_to(CLI::App* app) {
    app->add_option("--sizes", sizes, "Domain sizes Z,C,O,S")->capture_default_str();
    app->add_option("--concentration", concentration, "Dirichlet concentration of random rows")->capture_default_str();
    app->add_option("--signal", signal, "Weight of the cause-owned observation block")->capture_default_str();
    app->add_option("--confounding", confounding, "Weight of the subsystem-owned blocks")->capture_default_str();
    app->add_option("--noise", noise_p, "Keyword swap probability")->capture_default_str();
    app->add_option("--environments", environments, "Number of fleets")->capture_default_str();
    app->add_option("--n", n, "Records to generate")->capture_default_str();
  }

  GroundTruthSpec spec(std::uint64_t s) const {
    GroundTruthSpec g;
    g.sizes = parse_sizes(sizes);
    g.concentration = concentration;
    g.signal = signal;
    g.confounding = confounding;
    g.noise_p = noise_p;
    g.environments = environments;
    g.seed = s;
    return g;
  }
};

struct TrainFlags {
  std::string data;
  std::string out;
  std::uint64_t seed = 0;
  double alpha = 0.1;
  std::size_t reduced_dim = 64;
  std::size_t min_cluster_size = 5;
  double distance_threshold = 0.35;
  std::optional<std::size_t> obs_min_cluster_size, sol_min_cluster_size;
  std::optional<double> obs_distance_threshold, sol_distance_threshold;
  std::string stopwords;
  bool no_stem = false;
  std::string embedder_url;
};

TrainOptions train_options(const TrainFlags& f) {
  TrainOptions o;
  o.seed = f.seed;
  o.alpha = f.alpha;
  o.reduced_dim = f.reduced_dim;
  if (!f.stopwords.empty())
    o.text.stopwords = stage("load stopwords", [&] { return load_stopwords(f.stopwords); });
  o.text.stemming = !f.no_stem;
  if (!f.embedder_url.empty()) {
    o.embedder.kind = EmbedderKind::kRemote;
    o.embedder.url = f.embedder_url;
  }
  o.observation_clusters = {f.obs_min_cluster_size.value_or(f.min_cluster_size),
                            f.obs_distance_threshold.value_or(f.distance_threshold)};
  o.solution_clusters = {f.sol_min_cluster_size.value_or(f.min_cluster_size),
                         f.sol_distance_threshold.value_or(f.distance_threshold)};
  return o;
}

int cmd_train(const TrainFlags& f, bool as_json, std::ostream& out) {
  TrainOptions options = train_options(f);
  const IngestResult ingested = stage("ingest", [&] { return ingest_file(f.data, options.text); });
  options.fitted_at = stage("fit", [&] { return fit_timestamp(f.data); });
  TrainSummary summary;
  const CbnModel model = stage("fit", [&] { return train_model(ingested.corpus, options, &summary); });
  stage("save", [&] {
    save_file(model, f.out);
    return 0;
  });

  const auto& rep = ingested.report;
  if (as_json) {
    json sizes = json::object();
    for (Var v : kAllVars) sizes[std::string(to_string(v))] = summary.sizes[idx(v)];
    out << json{{"ingest", {{"accepted", rep.accepted}, {"skipped", rep.skipped}, {"skipped_rows", rep.skipped_rows}}},
                {"model", {{"path", f.out},
                           {"domain_sizes", sizes},
                           {"observation_categories", summary.sizes[idx(Var::O)]},
                           {"solution_categories", summary.sizes[idx(Var::S)]},
                           {"observation_noise", summary.observation_noise},
                           {"solution_noise", summary.solution_noise},
                           {"environments", summary.environments},
                           {"fitted_at", model.meta.fitted_at}}}}
                .dump(2)
        << '\n';
    return 0;
  }
  out << "ingest: " << rep.accepted << " accepted, " << rep.skipped << " skipped";
  if (!rep.skipped_rows.empty()) {
    out << " (rows";
    for (std::size_t r : rep.skipped_rows) out << ' ' << r;
    out << (rep.skipped > rep.skipped_rows.size() ? " ...)" : ")");
  }
  out << '\n';
  print_table(out, {"Variable", "Categories"},
              {{"Z subsystem", std::to_string(summary.sizes[idx(Var::Z)])},
               {"C root cause", std::to_string(summary.sizes[idx(Var::C)])},
               {"O observation", std::to_string(summary.sizes[idx(Var::O)])},
               {"S solution", std::to_string(summary.sizes[idx(Var::S)])}});
  out << "noise texts attached: observation " << summary.observation_noise << ", solution "
      << summary.solution_noise << '\n';
  out << "environments: " << summary.environments << '\n';
  out << "model written to " << f.out << '\n';
  return 0;
}

int cmd_diagnose(const std::string& model_path, const std::string& text, std::size_t top_k,
                 const std::string& subsystem, bool as_json, std::ostream& out) {
  const CbnModel model = load_model(model_path);
  const auto causes = stage("diagnose", [&] {
    return rca(model, text, top_k, subsystem.empty() ? std::nullopt : std::optional<std::string>(subsystem));
  });
  if (as_json) {
    out << json{{"causes", ranked_json(causes)}}.dump(2) << '\n';
  } else {
    print_ranked(out, "Root cause", causes);
  }
  return 0;
}

int cmd_solve(const std::string& model_path, const std::string& text, std::size_t top_k, bool generate,
              std::size_t k_retrieve, const std::string& llm_url, bool as_json, std::ostream& out) {
  const CbnModel model = load_model(model_path);
  const auto solutions = stage("solve", [&] { return intervene_solution(model, text, top_k); });
  std::optional<Advisory> advisory;
  if (generate) {
    advisory = stage("generate", [&] {
      const auto causes = rca(model, text, 5);
      std::vector<std::string> retrieved;
      if (model.solution_index && !solutions.entries.empty())
        retrieved = retrieve(*model.solution_index, static_cast<CategoryId>(solutions.top().index), k_retrieve);
      const PromptBundle prompt = build_prompt(text, causes, retrieved);
      if (llm_url.empty()) return StubGenerator{}.generate(prompt);
      RemoteGeneratorConfig rc;
      rc.url = llm_url;
      if (const char* key = std::getenv("LLM_API_KEY")) rc.api_key = key;
      return RemoteGenerator(rc).generate(prompt);
    });
  }
  auto exemplar = [&](std::size_t category) -> std::string {
    if (!model.solution_index) return {};
    auto texts = retrieve(*model.solution_index, static_cast<CategoryId>(category), 1);
    return texts.empty() ? std::string{} : texts.front();
  };
  if (as_json) {
    json sols = json::array();
    for (const auto& e : solutions.entries) {
      json ex = json::array();
      if (model.solution_index)
        for (auto& t : retrieve(*model.solution_index, static_cast<CategoryId>(e.index), k_retrieve)) ex.push_back(t);
      sols.push_back({{"label", e.label}, {"probability", e.probability}, {"exemplars", ex}});
    }
    json doc = {{"solutions", sols}};
    if (advisory)
      doc["advisory"] = {{"options", advisory->options}, {"raw_generation", advisory->raw_generation},
                         {"provenance", advisory->provenance}};
    out << doc.dump(2) << '\n';
    return 0;
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : solutions.entries) rows.push_back({e.label, fixed(e.probability), exemplar(e.index)});
  print_table(out, {"Solution", "Probability", "Exemplar"}, rows);
  if (advisory) {
    out << "\nAdvisory (" << advisory->provenance << "):\n";
    if (advisory->options.empty())
      out << advisory->raw_generation << '\n';
    else
      out << format_options(advisory->options);
  }
  return 0;
}

int cmd_transport(const std::string& model_path, const std::string& text, const std::string& target_env,
                  const std::vector<std::string>& z_pairs, std::size_t top_k, bool as_json, std::ostream& out) {
  const CbnModel model = load_model(model_path);
  TransportTarget target;
  if (!target_env.empty()) {
    target = target_env;
  } else {
    std::map<std::string, double> dist;
    for (const auto& pair : z_pairs) {
      const auto eq = pair.find('=');
      if (eq == std::string::npos) throw StageError{"transport", "--z expects label=probability, got '" + pair + "'"};
      dist[pair.substr(0, eq)] = std::stod(pair.substr(eq + 1));
    }
    target = dist;
  }
  const auto base = stage("transport", [&] { return intervene_solution(model, text, top_k); });
  const auto moved = stage("transport", [&] { return transport_solution(model, target, text, top_k); });
  if (as_json) {
    out << json{{"target", target_env}, {"solutions", ranked_json(moved)}, {"untransported", ranked_json(base)}}.dump(2)
        << '\n';
    return 0;
  }
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < moved.entries.size(); ++i)
    rows.push_back({moved.entries[i].label, fixed(moved.entries[i].probability),
                    i < base.entries.size() ? base.entries[i].label : "", i < base.entries.size() ? fixed(base.entries[i].probability) : ""});
  print_table(out, {"Solution (target)", "Probability", "Solution (source)", "Probability"}, rows);
  return 0;
}

int cmd_recourse(const std::string& model_path, const std::string& corpus_path, const std::string& record_id,
                 const std::string& alt_text, const std::string& mode_name, std::size_t samples,
                 std::uint64_t seed, std::size_t top_k, bool as_json, std::ostream& out) {
  const CbnModel model = load_model(model_path);
  const Corpus corpus = stage("load corpus", [&] { return ingest_file(corpus_path, model.text).corpus; });
  const RoxRecord* record = corpus.find(record_id);
  if (!record) throw StageError{"recourse", "unknown record id '" + record_id + "' in " + corpus_path};
  const auto mode = parse_noise_mode(mode_name);
  if (!mode) throw StageError{"recourse", "unknown mode '" + mode_name + "' (interventional | gumbel_max)"};
  NoiseModel noise{*mode, samples, seed};
  const auto dist = stage("recourse", [&] {
    Evidence factual;
    factual.z = record->subsystem;
    factual.c = record->root_cause;
    factual.o = std::to_string(model.encode_observation(record->observation));
    factual.s = std::to_string(model.encode_solution(record->solution));
    return recourse(model, factual, alt_text, noise).truncated(top_k);
  });
  if (as_json) {
    out << json{{"record_id", record_id}, {"mode", to_string(noise.mode)}, {"samples", samples}, {"seed", seed},
                {"solutions", ranked_json(dist)}}
                .dump(2)
        << '\n';
    return 0;
  }
  out << "factual: record " << record_id << " (" << record->subsystem << ", " << record->root_cause << ")\n";
  print_ranked(out, "Solution had the observation been the alternative", dist);
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data, bool synthetic, SyntheticFlags sf,
                 std::uint64_t seed, double train_fraction, double threshold, bool as_json, std::ostream& out) {
  json doc;
  if (synthetic) {
    TrainOptions options;
    options.seed = seed;
    options.fitted_at = iso8601_utc(0);
    options.observation_clusters.distance_threshold = threshold;
    options.solution_clusters.distance_threshold = threshold;
    const auto result = stage("evaluate", [&] {
      return run_synthetic_protocol(sf.spec(seed), sf.n, train_fraction, options);
    });
    doc = metrics_json(result.metrics);
    doc["bayes_optimal_accuracy"] = result.bayes_optimal;
    doc["train_records"] = result.train_records;
    doc["test_records"] = result.test_records;
  } else {
    if (model_path.empty() || data.empty())
      throw StageError{"evaluate", "--model and --data are required unless --synthetic is given"};
    const CbnModel model = load_model(model_path);
    const Corpus test = stage("ingest", [&] { return ingest_file(data, model.text).corpus; });
    doc = metrics_json(stage("evaluate", [&] { return evaluate_rca(model, test); }));
  }
  if (as_json) {
    out << doc.dump(2) << '\n';
    return 0;
  }
  std::vector<std::vector<std::string>> rows = {
      {"accuracy", fixed(doc["accuracy"].get<double>())},
      {"macro precision", fixed(doc["macro_precision"].get<double>())},
      {"macro recall", fixed(doc["macro_recall"].get<double>())},
      {"test records", std::to_string(doc["n_test"].get<std::size_t>())}};
  if (doc.contains("bayes_optimal_accuracy"))
    rows.push_back({"bayes-optimal accuracy", fixed(doc["bayes_optimal_accuracy"].get<double>())});
  print_table(out, {"Metric", "Value"}, rows);
  return 0;
}

int cmd_synth(const SyntheticFlags& sf, std::uint64_t seed, const std::string& out_path, std::ostream& out) {
  const auto data = stage("generate", [&] { return generate_synthetic(sf.spec(seed), sf.n); });
  std::ofstream file(out_path, std::ios::binary);
  if (!file) throw StageError{"write", "cannot open " + out_path};
  export_jsonl(data.corpus, file);
  out << "wrote " << data.corpus.size() << " records to " << out_path << '\n';
  return 0;
}

int cmd_serve(ServiceConfig config, std::ostream& out, std::ostream& err) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGHUP);
  // Block before any thread starts so that only the sigwait loop sees them.
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::unique_ptr<Service> service;
  int port = 0;
  try {
    config.validate();
    service = stage("load model", [&] { return std::make_unique<Service>(config); });
    port = stage("bind", [&] { return service->bind(); });
  } catch (...) {
    pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
    throw;
  }
  out << "listening on " << config.host << ':' << port << " (model " << config.model_path << ")" << std::endl;

  std::thread server([&] { service->run(); });
  for (;;) {
    int sig = 0;
    if (sigwait(&signals, &sig) != 0) continue;
    if (sig == SIGHUP) {
      try {
        service->reload();
        out << "model reloaded from " << config.model_path << std::endl;
      } catch (const std::exception& e) {
        err << "roxctl: reload failed, keeping the previous model: " << e.what() << std::endl;
      }
      continue;
    }
    break;
  }
  service->stop();
  server.join();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  out << "stopped" << std::endl;
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"roxctl: causal troubleshooting over maintenance records"};
  app.require_subcommand(1);
  app.fallthrough();
  bool as_json = false;
  app.add_flag("--json", as_json, "Machine-readable output");

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Ingest a corpus and fit a model artifact");
  train->add_option("--data", tf.data, "JSONL or CSV corpus")->required();
  train->add_option("--out", tf.out, "Model artifact path")->required();
  train->add_option("--seed", tf.seed)->capture_default_str();
  train->add_option("--alpha", tf.alpha, "Additive smoothing")->capture_default_str();
  train->add_option("--reduced-dim", tf.reduced_dim)->capture_default_str();
  train->add_option("--min-cluster-size", tf.min_cluster_size)->capture_default_str();
  train->add_option("--distance-threshold", tf.distance_threshold)->capture_default_str();
  train->add_option("--obs-min-cluster-size", tf.obs_min_cluster_size);
  train->add_option("--obs-distance-threshold", tf.obs_distance_threshold);
  train->add_option("--sol-min-cluster-size", tf.sol_min_cluster_size);
  train->add_option("--sol-distance-threshold", tf.sol_distance_threshold);
  train->add_option("--stopwords", tf.stopwords, "One stopword per line");
  train->add_flag("--no-stem", tf.no_stem);
  train->add_option("--embedder-url", tf.embedder_url, "Use a remote embedding endpoint");

  std::string model_path, text, subsystem, llm_url, target_env, corpus_path, record_id, alt_text;
  std::string mode = "gumbel_max";
  std::size_t top_k = 5, k_retrieve = 6, samples = 10000;
  std::uint64_t seed = 0;
  bool generate = false, synthetic = false;
  std::vector<std::string> z_pairs;
  std::string data_path, out_path;
  double train_fraction = 0.8;
  SyntheticFlags sf;

  auto* diagnose = app.add_subcommand("diagnose", "Rank root causes for an observation");
  diagnose->add_option("--model", model_path)->required();
  diagnose->add_option("--text", text)->required();
  diagnose->add_option("--top-k", top_k)->capture_default_str();
  diagnose->add_option("--subsystem", subsystem, "Condition on a known subsystem");

  auto* solve = app.add_subcommand("solve", "Rank solution categories under intervention");
  solve->add_option("--model", model_path)->required();
  solve->add_option("--text", text)->required();
  solve->add_option("--top-k", top_k)->capture_default_str();
  solve->add_flag("--generate", generate, "Assemble a prompt and produce an advisory");
  solve->add_option("--k-retrieve", k_retrieve)->capture_default_str();
  solve->add_option("--llm-url", llm_url, "Generator endpoint (stub generator when absent)");

  auto* transport = app.add_subcommand("transport", "Rank solutions for another fleet");
  transport->add_option("--model", model_path)->required();
  transport->add_option("--text", text)->required();
  auto* env_opt = transport->add_option("--target-env", target_env);
  auto* z_opt = transport->add_option("--z", z_pairs, "label=probability, repeatable");
  env_opt->excludes(z_opt);
  transport->add_option("--top-k", top_k)->capture_default_str();

  auto* recourse_cmd = app.add_subcommand("recourse", "Counterfactual solutions for a past case");
  recourse_cmd->add_option("--model", model_path)->required();
  recourse_cmd->add_option("--corpus", corpus_path, "Corpus holding the factual record")->required();
  recourse_cmd->add_option("--record-id", record_id)->required();
  recourse_cmd->add_option("--alt-text", alt_text, "Alternative observation")->required();
  recourse_cmd->add_option("--mode", mode)->capture_default_str();
  recourse_cmd->add_option("--samples", samples)->capture_default_str();
  recourse_cmd->add_option("--seed", seed)->capture_default_str();
  recourse_cmd->add_option("--top-k", top_k)->capture_default_str();

  auto* evaluate = app.add_subcommand("evaluate", "Root-cause accuracy on held-out or synthetic data");
  evaluate->add_option("--model", model_path);
  evaluate->add_option("--data", data_path, "Labelled test corpus");
  evaluate->add_flag("--synthetic", synthetic, "Generate, split, train and score a synthetic corpus");
  evaluate->add_option("--seed", seed)->capture_default_str();
  evaluate->add_option("--train-fraction", train_fraction)->capture_default_str();
  double synthetic_threshold = 0.25;
  evaluate->add_option("--distance-threshold", synthetic_threshold,
                       "Cluster threshold used when training on the synthetic corpus")
      ->capture_default_str();
  sf.add_to(evaluate);

  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus as JSONL");
  synth->add_option("--out", out_path)->required();
  synth->add_option("--seed", seed)->capture_default_str();
  sf.add_to(synth);

  std::string config_path;
  ServiceConfig sc;
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  serve->add_option("--config", config_path, "key = value config file");
  std::optional<std::string> s_model, s_host, s_llm, s_embedder, s_corpus;
  std::optional<int> s_port, s_timeout;
  std::optional<std::size_t> s_top_k, s_k_retrieve, s_max_gen;
  serve->add_option("--model", s_model);
  serve->add_option("--host", s_host);
  serve->add_option("--port", s_port);
  serve->add_option("--top-k", s_top_k);
  serve->add_option("--k-retrieve", s_k_retrieve);
  serve->add_option("--llm-url", s_llm);
  serve->add_option("--embedder-url", s_embedder);
  serve->add_option("--timeout-ms", s_timeout);
  serve->add_option("--max-concurrent-generations", s_max_gen);
  serve->add_option("--corpus", s_corpus);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*train) return cmd_train(tf, as_json, out);
    if (*diagnose) return cmd_diagnose(model_path, text, top_k, subsystem, as_json, out);
    if (*solve) return cmd_solve(model_path, text, top_k, generate, k_retrieve, llm_url, as_json, out);
    if (*transport) {
      if (target_env.empty() && z_pairs.empty()) throw StageError{"transport", "one of --target-env or --z is required"};
      return cmd_transport(model_path, text, target_env, z_pairs, top_k, as_json, out);
    }
    if (*recourse_cmd)
      return cmd_recourse(model_path, corpus_path, record_id, alt_text, mode, samples, seed, top_k, as_json, out);
    if (*evaluate) return cmd_evaluate(model_path, data_path, synthetic, sf, seed, train_fraction, synthetic_threshold, as_json, out);
    if (*synth) return cmd_synth(sf, seed, out_path, out);
    if (*serve) {
      if (!config_path.empty()) sc = stage("config", [&] { return load_service_config(config_path); });
      if (s_model) sc.model_path = *s_model;
      if (s_host) sc.host = *s_host;
      if (s_port) sc.port = *s_port;
      if (s_top_k) sc.top_k = *s_top_k;
      if (s_k_retrieve) sc.k_retrieve = *s_k_retrieve;
      if (s_llm) sc.llm_url = *s_llm;
      if (s_embedder) sc.embedder_url = *s_embedder;
      if (s_timeout) sc.request_timeout_ms = *s_timeout;
      if (s_max_gen) sc.max_concurrent_generations = *s_max_gen;
      if (s_corpus) sc.corpus_path = *s_corpus;
      return cmd_serve(sc, out, err);
    }
  } catch (const StageError& e) {
    err << "roxctl: " << e.stage << " failed: " << e.message << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "roxctl: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace rox::cli
