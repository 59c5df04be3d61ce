#include "rox/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>
#include <unistd.h>

#include <json.hpp>

#include "rox/error.hpp"

namespace rox {

using nlohmann::json;

const std::vector<Var>& parents_of(Var v) {
  static const std::array<std::vector<Var>, kNumVars> parents = {
      std::vector<Var>{},
      std::vector<Var>{Var::Z},
      std::vector<Var>{Var::C, Var::Z},
      std::vector<Var>{Var::C, Var::Z, Var::O},
  };
  return parents[idx(v)];
}

DomainSizes CbnModel::sizes() const {
  DomainSizes s{};
  for (Var v : kAllVars) s[idx(v)] = domains[idx(v)].size();
  return s;
}

CategoryId CbnModel::encode_observation(std::string_view text_in) const {
  if (!observation_quantizer)
    throw Error(ErrorCode::kConfiguration, "model has no observation quantizer");
  return observation_quantizer->assign(clean_text(text_in, text));
}

CategoryId CbnModel::encode_solution(std::string_view text_in) const {
  if (!solution_quantizer) throw Error(ErrorCode::kConfiguration, "model has no solution quantizer");
  return solution_quantizer->assign(clean_text(text_in, text));
}

std::vector<std::string> category_labels(std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(std::to_string(i));
  return out;
}

CbnModel fit_counts(std::array<CategoricalDomain, kNumVars> domains,
                    std::span<const EncodedRecord> data, const FitOptions& options) {
  if (data.empty()) throw Error(ErrorCode::kEmptyCorpus, "cannot fit a model on zero records");
  CbnModel model;
  model.domains = std::move(domains);
  const DomainSizes sizes = model.sizes();
  for (Var v : kAllVars)
    model.cpts[idx(v)] = SparseCpt(v, parents_of(v), sizes, options.alpha, options.backoff[idx(v)]);

  std::map<std::string, std::vector<std::uint64_t>> env_counts;
  for (const auto& rec : data) {
    for (Var v : kAllVars) model.cpts[idx(v)].observe(rec.values);
    auto& counts = env_counts[rec.environment];
    counts.resize(sizes[idx(Var::Z)], 0);
    ++counts[rec.values[idx(Var::Z)]];
  }
  const double nz = static_cast<double>(sizes[idx(Var::Z)]);
  for (const auto& [env, counts] : env_counts) {
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    std::vector<double> marginal(counts.size());
    for (std::size_t z = 0; z < counts.size(); ++z)
      marginal[z] = (static_cast<double>(counts[z]) + options.alpha) /
                    (static_cast<double>(total) + options.alpha * nz);
    model.env_z_marginals.emplace(env, std::move(marginal));
  }
  model.meta.alpha = options.alpha;
  model.meta.seed = options.seed;
  model.meta.fitted_at = options.fitted_at;
  model.meta.training_records = data.size();
  return model;
}

CbnModel fit(const Corpus& train, const Quantizer& observation, const Quantizer& solution,
             const TextOptions& text, const FitOptions& options) {
  if (train.records.empty()) throw Error(ErrorCode::kEmptyCorpus, "training corpus is empty");
  if (observation.codebook.size() == 0 || solution.codebook.size() == 0)
    throw Error(ErrorCode::kConfiguration, "quantizers are not fitted");

  std::set<std::string> z_labels, c_labels;
  for (const auto& r : train.records) {
    z_labels.insert(r.subsystem);
    c_labels.insert(r.root_cause);
  }
  std::array<CategoricalDomain, kNumVars> domains = {
      CategoricalDomain(Var::Z, {z_labels.begin(), z_labels.end()}),
      CategoricalDomain(Var::C, {c_labels.begin(), c_labels.end()}),
      CategoricalDomain(Var::O, category_labels(observation.codebook.size())),
      CategoricalDomain(Var::S, category_labels(solution.codebook.size())),
  };

  std::vector<EncodedRecord> encoded;
  encoded.reserve(train.records.size());
  for (const auto& r : train.records) {
    EncodedRecord e;
    e.values[idx(Var::Z)] = domains[idx(Var::Z)].index(r.subsystem);
    e.values[idx(Var::C)] = domains[idx(Var::C)].index(r.root_cause);
    e.values[idx(Var::O)] = observation.assign(clean_text(r.observation, text));
    e.values[idx(Var::S)] = solution.assign(clean_text(r.solution, text));
    e.environment = r.environment;
    encoded.push_back(std::move(e));
  }
  CbnModel model = fit_counts(std::move(domains), encoded, options);
  model.text = text;
  model.observation_quantizer = observation;
  model.solution_quantizer = solution;
  return model;
}

CbnModel from_tables(std::array<CategoricalDomain, kNumVars> domains,
                     std::array<std::vector<double>, kNumVars> tables,
                     std::map<std::string, std::vector<double>> env_z_marginals) {
  CbnModel model;
  model.domains = std::move(domains);
  const DomainSizes sizes = model.sizes();
  for (Var v : kAllVars)
    model.cpts[idx(v)] = SparseCpt::from_table(v, parents_of(v), sizes, std::move(tables[idx(v)]));
  for (const auto& [env, marginal] : env_z_marginals) {
    if (marginal.size() != sizes[idx(Var::Z)])
      throw Error(ErrorCode::kArgument, "environment marginal for '" + env + "' has wrong size");
  }
  model.env_z_marginals = std::move(env_z_marginals);
  model.meta.alpha = 0.0;
  return model;
}

double joint(const CbnModel& model, const Assignment& a) {
  double p = 1.0;
  for (Var v : kAllVars) p *= model.factor(v, a);
  return p;
}

double joint(const CbnModel& model, std::string_view z, std::string_view c, std::string_view o,
             std::string_view s) {
  const Assignment a = {model.domain(Var::Z).index(z), model.domain(Var::C).index(c),
                        model.domain(Var::O).index(o), model.domain(Var::S).index(s)};
  return joint(model, a);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json vars_json(const std::vector<Var>& vars) {
  json out = json::array();
  for (Var v : vars) out.push_back(std::string(to_string(v)));
  return out;
}

std::vector<Var> vars_from(const json& j) {
  std::vector<Var> out;
  for (const auto& item : j) {
    auto v = parse_var(item.get<std::string>());
    if (!v) throw ParseError("unknown variable name '" + item.get<std::string>() + "'", 0);
    out.push_back(*v);
  }
  return out;
}

json cpt_json(const SparseCpt& cpt) {
  json out;
  out["parents"] = vars_json(cpt.parents());
  if (cpt.is_table()) {
    out["table"] = cpt.table();
    return out;
  }
  out["alpha"] = cpt.alpha();
  json backoff = json::array();
  for (const auto& subset : cpt.backoff()) backoff.push_back(vars_json(subset));
  out["backoff"] = backoff;
  json entries = json::array();
  for (const auto& [key, ctx] : cpt.contexts()) {
    const Assignment parents = cpt.decode_context(key);
    for (const auto& [child, count] : ctx.counts) {
      json row = json::array();
      for (Var p : cpt.parents()) row.push_back(parents[idx(p)]);
      row.push_back(child);
      row.push_back(count);
      entries.push_back(std::move(row));
    }
  }
  out["entries"] = std::move(entries);
  return out;
}

SparseCpt cpt_from(Var child, const json& j, const DomainSizes& sizes) {
  std::vector<Var> parents = vars_from(j.at("parents"));
  if (parents != parents_of(child))
    throw ParseError("CPT for " + std::string(to_string(child)) + " has non-standard parents", 0);
  if (j.contains("table"))
    return SparseCpt::from_table(child, parents, sizes, j.at("table").get<std::vector<double>>());
  std::vector<std::vector<Var>> backoff;
  for (const auto& subset : j.at("backoff")) backoff.push_back(vars_from(subset));
  SparseCpt cpt(child, parents, sizes, j.at("alpha").get<double>(), std::move(backoff));
  for (const auto& row : j.at("entries")) {
    if (row.size() != parents.size() + 2) throw ParseError("malformed CPT entry", 0);
    Assignment a{};
    for (std::size_t k = 0; k < parents.size(); ++k) a[idx(parents[k])] = row[k].get<std::size_t>();
    a[idx(child)] = row[parents.size()].get<std::size_t>();
    cpt.observe(a, row[parents.size() + 1].get<std::uint64_t>());
  }
  return cpt;
}

json quantizer_json(const Quantizer& q) {
  json out;
  out["field"] = std::string(to_string(q.field));
  out["embedder"] = {{"kind", q.embedder.kind == EmbedderKind::kHashed ? "hashed" : "remote"},
                     {"dim", q.embedder.dim},
                     {"url", q.embedder.url},
                     {"timeout_ms", q.embedder.timeout_ms}};
  const auto& r = q.codebook.reducer;
  out["reducer"] = {{"seed", r.seed},
                    {"input_dim", r.input_dim},
                    {"output_dim", r.output_dim},
                    {"density_inverse", r.density_inverse}};
  out["params"] = {{"min_cluster_size", q.codebook.params.min_cluster_size},
                   {"distance_threshold", q.codebook.params.distance_threshold},
                   {"distance", "cosine"}};
  json cats = json::array();
  for (const auto& c : q.codebook.categories)
    cats.push_back({{"id", c.id}, {"member_count", c.member_count}, {"centroid", c.centroid}});
  out["categories"] = std::move(cats);
  return out;
}

Quantizer quantizer_from(const json& j) {
  Quantizer q;
  const auto field = j.at("field").get<std::string>();
  if (field == "observation")
    q.field = Field::kObservation;
  else if (field == "solution")
    q.field = Field::kSolution;
  else
    throw ParseError("unknown quantizer field '" + field + "'", 0);
  const auto& e = j.at("embedder");
  const auto kind = e.at("kind").get<std::string>();
  if (kind != "hashed" && kind != "remote") throw ParseError("unknown embedder kind '" + kind + "'", 0);
  q.embedder.kind = kind == "hashed" ? EmbedderKind::kHashed : EmbedderKind::kRemote;
  q.embedder.dim = e.at("dim").get<std::size_t>();
  q.embedder.url = e.at("url").get<std::string>();
  q.embedder.timeout_ms = e.at("timeout_ms").get<int>();
  const auto& r = j.at("reducer");
  q.codebook.reducer = ReducerSpec{r.at("seed").get<std::uint64_t>(), r.at("input_dim").get<std::size_t>(),
                                   r.at("output_dim").get<std::size_t>(),
                                   r.at("density_inverse").get<std::uint32_t>()};
  const auto& p = j.at("params");
  q.codebook.params = ClusterParams{p.at("min_cluster_size").get<std::size_t>(),
                                    p.at("distance_threshold").get<double>()};
  for (const auto& c : j.at("categories")) {
    CodebookCategory cat{c.at("id").get<CategoryId>(), c.at("centroid").get<std::vector<double>>(),
                         c.at("member_count").get<std::size_t>()};
    if (cat.id != q.codebook.categories.size()) throw ParseError("codebook ids are not contiguous", 0);
    if (cat.centroid.size() != q.codebook.reducer.output_dim)
      throw ParseError("centroid dimension does not match reducer", 0);
    q.codebook.categories.push_back(std::move(cat));
  }
  if (q.codebook.categories.empty()) throw ParseError("codebook has no categories", 0);
  return q;
}

}  // namespace

std::string save(const CbnModel& model) {
  json doc;
  doc["schema_version"] = model.meta.schema_version;
  doc["meta"] = {{"seed", model.meta.seed},
                 {"alpha", model.meta.alpha},
                 {"fitted_at", model.meta.fitted_at},
                 {"training_records", model.meta.training_records}};
  json domains, cpts;
  for (Var v : kAllVars) {
    domains[std::string(to_string(v))] = model.domain(v).labels();
    cpts[std::string(to_string(v))] = cpt_json(model.cpt(v));
  }
  doc["domains"] = std::move(domains);
  doc["cpts"] = std::move(cpts);
  json quantizers = json::object();
  if (model.observation_quantizer) quantizers["observation"] = quantizer_json(*model.observation_quantizer);
  if (model.solution_quantizer) quantizers["solution"] = quantizer_json(*model.solution_quantizer);
  doc["quantizers"] = std::move(quantizers);
  doc["env_z_marginals"] = model.env_z_marginals;
  doc["text"] = {{"stemming", model.text.stemming},
                 {"stopwords", std::vector<std::string>(model.text.stopwords.begin(),
                                                        model.text.stopwords.end())}};
  if (model.solution_index) {
    json buckets = json::array();
    for (const auto& bucket : model.solution_index->buckets) {
      json items = json::array();
      for (const auto& s : bucket)
        items.push_back({{"record_id", s.record_id}, {"text", s.text}, {"distance", s.distance}});
      buckets.push_back(std::move(items));
    }
    doc["solution_index"] = std::move(buckets);
  }
  return doc.dump();
}

CbnModel load(std::string_view artifact) {
  json doc;
  try {
    doc = json::parse(artifact);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("model artifact is not valid JSON: ") + e.what(), e.byte);
  }
  if (!doc.is_object()) throw ParseError("model artifact must be a JSON object", 0);
  if (!doc.contains("schema_version") || !doc["schema_version"].is_number_integer())
    throw Error(ErrorCode::kUnsupportedVersion, "model artifact has no schema_version");
  const int version = doc["schema_version"].get<int>();
  if (version != kSchemaVersion)
    throw Error(ErrorCode::kUnsupportedVersion,
                "model artifact schema_version " + std::to_string(version) +
                    " is not supported (expected " + std::to_string(kSchemaVersion) +
                    "); retrain or migrate the artifact");

  try {
    CbnModel model;
    const auto& meta = doc.at("meta");
    model.meta.schema_version = version;
    model.meta.seed = meta.at("seed").get<std::uint64_t>();
    model.meta.alpha = meta.at("alpha").get<double>();
    model.meta.fitted_at = meta.at("fitted_at").get<std::string>();
    model.meta.training_records = meta.at("training_records").get<std::size_t>();
    for (Var v : kAllVars)
      model.domains[idx(v)] =
          CategoricalDomain(v, doc.at("domains").at(std::string(to_string(v))).get<std::vector<std::string>>());
    const DomainSizes sizes = model.sizes();
    for (Var v : kAllVars)
      model.cpts[idx(v)] = cpt_from(v, doc.at("cpts").at(std::string(to_string(v))), sizes);
    const auto& q = doc.at("quantizers");
    if (q.contains("observation")) model.observation_quantizer = quantizer_from(q.at("observation"));
    if (q.contains("solution")) model.solution_quantizer = quantizer_from(q.at("solution"));
    model.env_z_marginals = doc.at("env_z_marginals").get<std::map<std::string, std::vector<double>>>();
    for (const auto& [env, m] : model.env_z_marginals)
      if (m.size() != sizes[idx(Var::Z)]) throw ParseError("environment marginal '" + env + "' has wrong size", 0);
    const auto& text = doc.at("text");
    model.text.stemming = text.at("stemming").get<bool>();
    const auto words = text.at("stopwords").get<std::vector<std::string>>();
    model.text.stopwords = StopwordSet(words.begin(), words.end());
    if (doc.contains("solution_index")) {
      SolutionIndex index;
      for (const auto& bucket : doc.at("solution_index")) {
        auto& out = index.buckets.emplace_back();
        for (const auto& s : bucket)
          out.push_back({s.at("record_id").get<std::string>(), s.at("text").get<std::string>(),
                         s.at("distance").get<double>()});
      }
      model.solution_index = std::move(index);
    }
    if (model.observation_quantizer &&
        model.observation_quantizer->codebook.size() != sizes[idx(Var::O)])
      throw ParseError("observation codebook size does not match the O domain", 0);
    if (model.solution_quantizer && model.solution_quantizer->codebook.size() != sizes[idx(Var::S)])
      throw ParseError("solution codebook size does not match the S domain", 0);
    return model;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model artifact has an invalid structure: ") + e.what(), 0);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(std::string("model artifact is inconsistent: ") + e.what(), 0);
  }
}

void save_file(const CbnModel& model, const std::filesystem::path& path) {
  const std::string bytes = save(model);
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::kIo, "cannot move model into place at " + path.string() + ": " + ec.message());
  }
}

CbnModel load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read model artifact " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return load(buf.str());
}

}  // namespace rox
