#include "rox/service.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "rox/advisory.hpp"
#include "rox/error.hpp"
#include "rox/inference.hpp"

namespace rox {
namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw Error(ErrorCode::kConfiguration,
                "config key '" + std::string(key) + "' expects a number, got '" + std::string(value) + "'");
  return out;
}

// Request-level failure with an HTTP status and optional extra error fields.
struct RequestError {
  int status;
  std::string code;
  std::string message;
  json extra = json::object();
};

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kArgument:
    case ErrorCode::kParse:
      return 400;
    case ErrorCode::kLookup:
    case ErrorCode::kDomain:
    case ErrorCode::kValidation:
      return 422;
    case ErrorCode::kTransport:
      return 502;
    default:
      return 500;
  }
}

HttpResponse error_response(int status, std::string_view code, std::string_view message,
                            const json& extra = json::object()) {
  json err = {{"code", code}, {"message", message}};
  for (const auto& [k, v] : extra.items()) err[k] = v;
  return {status, json{{"error", err}}.dump()};
}

const json& require(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end())
    throw RequestError{400, "invalid_argument", std::string("missing field '") + key + "'"};
  return *it;
}

std::string require_string(const json& body, const char* key) {
  const json& v = require(body, key);
  if (!v.is_string()) throw RequestError{400, "invalid_argument", std::string("field '") + key + "' must be a string"};
  return v.get<std::string>();
}

std::optional<std::uint64_t> optional_uint(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_unsigned())
    throw RequestError{400, "invalid_argument", std::string("field '") + key + "' must be a non-negative integer"};
  return it->get<std::uint64_t>();
}

bool optional_bool(const json& body, const char* key, bool fallback) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return fallback;
  if (!it->is_boolean()) throw RequestError{400, "invalid_argument", std::string("field '") + key + "' must be a boolean"};
  return it->get<bool>();
}

json ranked_json(const RankedDistribution& dist) {
  json out = json::array();
  for (const auto& e : dist.entries)
    out.push_back({{"label", e.label}, {"index", e.index}, {"probability", e.probability}});
  return out;
}

json meta_json(const CbnModel& model) {
  return {{"schema_version", model.meta.schema_version},
          {"seed", model.meta.seed},
          {"alpha", model.meta.alpha},
          {"fitted_at", model.meta.fitted_at},
          {"training_records", model.meta.training_records}};
}

struct Snapshot {
  CbnModel model;
  std::optional<Corpus> corpus;
};

}  // namespace

void ServiceConfig::set(std::string_view key, std::string_view value) {
  if (key == "model_path") {
    model_path = value;
  } else if (key == "host" || key == "listen") {
    host = value;
  } else if (key == "port") {
    port = parse_number<int>(key, value);
  } else if (key == "top_k") {
    top_k = parse_number<std::size_t>(key, value);
  } else if (key == "k_retrieve") {
    k_retrieve = parse_number<std::size_t>(key, value);
  } else if (key == "llm.url") {
    llm_url = value;
  } else if (key == "embedder.url") {
    embedder_url = value;
  } else if (key == "request_timeout_ms") {
    request_timeout_ms = parse_number<int>(key, value);
  } else if (key == "max_concurrent_generations") {
    max_concurrent_generations = parse_number<std::size_t>(key, value);
  } else if (key == "corpus_path") {
    corpus_path = value;
  } else {
    throw Error(ErrorCode::kConfiguration, "unknown config key '" + std::string(key) + "'");
  }
}

void ServiceConfig::validate() const {
  if (port < 1 || port > 65535)
    throw Error(ErrorCode::kConfiguration, "port must be in [1, 65535], got " + std::to_string(port));
  if (request_timeout_ms <= 0) throw Error(ErrorCode::kConfiguration, "request_timeout_ms must be > 0");
  if (top_k == 0) throw Error(ErrorCode::kConfiguration, "top_k must be >= 1");
  if (max_concurrent_generations == 0)
    throw Error(ErrorCode::kConfiguration, "max_concurrent_generations must be >= 1");
}

ServiceConfig parse_service_config(std::string_view text) {
  ServiceConfig config;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::kConfiguration, "config line " + std::to_string(line_no) + ": expected key = value");
    config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_service_config(ss.str());
}

struct Service::Impl {
  ServiceConfig config;
  mutable std::mutex snapshot_mutex;
  std::shared_ptr<const Snapshot> snapshot;
  mutable std::atomic<std::uint64_t> seed_counter{0};
  std::unique_ptr<Generator> generator;
  httplib::Server server;
  int bound_port = -1;

  std::shared_ptr<const Snapshot> current() const {
    std::lock_guard lock(snapshot_mutex);
    return snapshot;
  }

  void install(CbnModel model, std::optional<Corpus> corpus) {
    if (!config.embedder_url.empty()) {
      for (auto* q : {&model.observation_quantizer, &model.solution_quantizer}) {
        if (*q && (*q)->embedder.kind == EmbedderKind::kRemote) {
          (*q)->embedder.url = config.embedder_url;
          (*q)->embedder.timeout_ms = config.request_timeout_ms;
        }
      }
    }
    auto next = std::make_shared<const Snapshot>(Snapshot{std::move(model), std::move(corpus)});
    std::lock_guard lock(snapshot_mutex);
    snapshot = std::move(next);
  }

  void load_from_disk() {
    if (config.model_path.empty()) throw Error(ErrorCode::kConfiguration, "model_path is not set");
    CbnModel model = load_file(config.model_path);
    std::optional<Corpus> corpus;
    if (!config.corpus_path.empty()) corpus = ingest_file(config.corpus_path, model.text).corpus;
    install(std::move(model), std::move(corpus));
  }

  void make_generator() {
    if (config.llm_url.empty()) {
      generator = std::make_unique<StubGenerator>();
      return;
    }
    RemoteGeneratorConfig rc;
    rc.url = config.llm_url;
    rc.timeout_ms = config.request_timeout_ms;
    rc.max_concurrent = config.max_concurrent_generations;
    if (const char* key = std::getenv("LLM_API_KEY")) rc.api_key = key;
    generator = std::make_unique<RemoteGenerator>(std::move(rc));
  }

  std::size_t top_k(const json& body) const {
    const auto k = optional_uint(body, "top_k").value_or(config.top_k);
    if (k == 0) throw RequestError{400, "invalid_argument", "top_k must be >= 1"};
    return static_cast<std::size_t>(k);
  }

  json solutions_json(const CbnModel& model, const RankedDistribution& dist, std::size_t k_retrieve) const {
    json out = json::array();
    for (const auto& e : dist.entries) {
      json exemplars = json::array();
      if (model.solution_index)
        for (auto& text : retrieve(*model.solution_index, static_cast<CategoryId>(e.index), k_retrieve))
          exemplars.push_back(std::move(text));
      out.push_back({{"label", e.label}, {"index", e.index}, {"probability", e.probability},
                     {"exemplars", std::move(exemplars)}});
    }
    return out;
  }

  json health() const {
    auto snap = current();
    return {{"status", "ok"}, {"schema_version", snap->model.meta.schema_version}};
  }

  json model_info() const {
    const auto snap = current();
    const CbnModel& m = snap->model;
    json sizes = json::object();
    for (Var v : kAllVars) sizes[std::string(to_string(v))] = m.domain(v).size();
    json envs = json::array();
    for (const auto& [env, pz] : m.env_z_marginals) envs.push_back(env);
    return {{"schema_version", m.meta.schema_version},
            {"domain_sizes", sizes},
            {"meta", meta_json(m)},
            {"environments", envs},
            {"subsystems", m.domain(Var::Z).labels()},
            {"recourse_by_record_id", snap->corpus.has_value()}};
  }

  json diagnose(const json& body, bool solve) const {
    const auto snap = current();
    const CbnModel& m = snap->model;
    const std::string text = require_string(body, "text");
    const std::size_t k = top_k(body);
    const auto k_retrieve = static_cast<std::size_t>(optional_uint(body, "k_retrieve").value_or(config.k_retrieve));
    const RankedDistribution causes = rca(m, text, k);
    const RankedDistribution solutions = intervene_solution(m, text, k);
    json out = {{"causes", ranked_json(causes)},
                {"solutions", solutions_json(m, solutions, k_retrieve)},
                {"model_meta", meta_json(m)}};
    if (solve && optional_bool(body, "generate", false)) {
      std::vector<std::string> retrieved;
      if (m.solution_index && !solutions.entries.empty())
        retrieved = retrieve(*m.solution_index, static_cast<CategoryId>(solutions.top().index), k_retrieve);
      const PromptBundle prompt = build_prompt(text, causes, retrieved);
      const Advisory advisory = generator->generate(prompt);
      out["advisory"] = {{"options", advisory.options},
                         {"raw_generation", advisory.raw_generation},
                         {"provenance", advisory.provenance},
                         {"prompt", prompt.assembled}};
    } else {
      out["advisory"] = nullptr;
    }
    return out;
  }

  json transport(const json& body) const {
    const auto snap = current();
    const CbnModel& m = snap->model;
    const std::string text = require_string(body, "text");
    const std::size_t k = top_k(body);
    TransportTarget target;
    std::string target_name;
    if (auto it = body.find("target_env"); it != body.end() && !it->is_null()) {
      if (!it->is_string()) throw RequestError{400, "invalid_argument", "target_env must be a string"};
      target = it->get<std::string>();
      target_name = it->get<std::string>();
    } else if (auto jt = body.find("z_marginal"); jt != body.end() && !jt->is_null()) {
      if (!jt->is_object()) throw RequestError{400, "invalid_argument", "z_marginal must be an object of label -> probability"};
      std::map<std::string, double> dist;
      for (const auto& [label, p] : jt->items()) {
        if (!p.is_number()) throw RequestError{400, "invalid_argument", "z_marginal values must be numbers"};
        dist[label] = p.get<double>();
      }
      target = std::move(dist);
    } else {
      throw RequestError{400, "invalid_argument", "one of 'target_env' or 'z_marginal' is required"};
    }
    std::vector<double> pz;
    try {
      pz = target_z_marginal(m, target);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kLookup) throw;
      json known = json::array();
      for (const auto& [env, unused] : m.env_z_marginals) known.push_back(env);
      throw RequestError{422, std::string(to_string(e.code())), e.what(), {{"known_environments", known}}};
    }
    const RankedDistribution solutions = transport_solution(m, target, text, k);
    json marginal = json::object();
    for (std::size_t z = 0; z < pz.size(); ++z) marginal[m.domain(Var::Z).label(z)] = pz[z];
    return {{"target", target_name.empty() ? json(nullptr) : json(target_name)},
            {"z_marginal", marginal},
            {"solutions", solutions_json(m, solutions, config.k_retrieve)},
            {"model_meta", meta_json(m)}};
  }

  json recourse_request(const json& body) const {
    const auto snap = current();
    const CbnModel& m = snap->model;
    const std::string alt_text = require_string(body, "alt_text");
    Evidence factual;
    std::optional<std::string> record_id;
    if (auto it = body.find("record_id"); it != body.end() && !it->is_null()) {
      std::string id = it->is_string() ? it->get<std::string>() : it->dump();
      if (!snap->corpus)
        throw RequestError{422, "not_found", "recourse by record_id needs corpus_path in the service config"};
      const RoxRecord* r = snap->corpus->find(id);
      if (!r) throw RequestError{422, "not_found", "unknown record_id '" + id + "'"};
      factual.z = r->subsystem;
      factual.c = r->root_cause;
      factual.o = std::to_string(m.encode_observation(r->observation));
      factual.s = std::to_string(m.encode_solution(r->solution));
      record_id = id;
    } else if (auto ft = body.find("factual"); ft != body.end() && ft->is_object()) {
      factual.z = require_string(*ft, "z");
      factual.c = require_string(*ft, "c");
      factual.o = std::to_string(m.encode_observation(require_string(*ft, "o_text")));
      factual.s = std::to_string(m.encode_solution(require_string(*ft, "s_text")));
    } else {
      throw RequestError{400, "invalid_argument", "one of 'factual' or 'record_id' is required"};
    }

    NoiseModel noise;
    if (auto it = body.find("mode"); it != body.end() && !it->is_null()) {
      if (!it->is_string()) throw RequestError{400, "invalid_argument", "mode must be a string"};
      auto mode = parse_noise_mode(it->get<std::string>());
      if (!mode) throw RequestError{400, "invalid_argument", "mode must be 'interventional' or 'gumbel_max'"};
      noise.mode = *mode;
    }
    noise.samples = static_cast<std::size_t>(optional_uint(body, "samples").value_or(noise.samples));
    noise.seed = optional_uint(body, "seed").value_or(seed_counter.fetch_add(1));
    const std::size_t k = top_k(body);

    const RankedDistribution dist = recourse(m, factual, alt_text, noise).truncated(k);
    json out = {{"mode", to_string(noise.mode)},
                {"samples", noise.samples},
                {"seed", noise.seed},
                {"factual", {{"z", *factual.z}, {"c", *factual.c}, {"o", *factual.o}, {"s", *factual.s}}},
                {"alternative_o", std::to_string(m.encode_observation(alt_text))},
                {"solutions", solutions_json(m, dist, config.k_retrieve)},
                {"model_meta", meta_json(m)}};
    if (record_id) out["record_id"] = *record_id;
    return out;
  }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>()) {
  config.validate();
  impl_->config = std::move(config);
  impl_->load_from_disk();
  impl_->make_generator();
}

Service::Service(ServiceConfig config, CbnModel model, std::optional<Corpus> corpus)
    : impl_(std::make_unique<Impl>()) {
  config.validate();
  impl_->config = std::move(config);
  impl_->install(std::move(model), std::move(corpus));
  impl_->make_generator();
}

Service::~Service() { stop(); }

const ServiceConfig& Service::config() const noexcept { return impl_->config; }

void Service::reload() { impl_->load_from_disk(); }

HttpResponse Service::handle(std::string_view method, std::string_view path, std::string_view body) const {
  try {
    if (method == "GET") {
      if (path == "/v1/health") return {200, impl_->health().dump()};
      if (path == "/v1/model") return {200, impl_->model_info().dump()};
    } else if (method == "POST") {
      if (path == "/v1/diagnose" || path == "/v1/solve" || path == "/v1/transport" || path == "/v1/recourse") {
        json request;
        try {
          request = json::parse(body);
        } catch (const json::parse_error& e) {
          return error_response(400, "parse_error",
                                "request body is not valid JSON (byte " + std::to_string(e.byte) + ")");
        }
        if (!request.is_object()) return error_response(400, "invalid_argument", "request body must be a JSON object");
        if (path == "/v1/diagnose") return {200, impl_->diagnose(request, false).dump()};
        if (path == "/v1/solve") return {200, impl_->diagnose(request, true).dump()};
        if (path == "/v1/transport") return {200, impl_->transport(request).dump()};
        return {200, impl_->recourse_request(request).dump()};
      }
    }
    return error_response(404, "not_found", std::string(method) + " " + std::string(path) + " is not an endpoint");
  } catch (const RequestError& e) {
    return error_response(e.status, e.code, e.message, e.extra);
  } catch (const Error& e) {
    return error_response(status_for(e.code()), to_string(e.code()), e.what());
  } catch (const json::exception& e) {
    return error_response(400, "invalid_argument", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal_error", e.what());
  }
}

int Service::bind(bool any_port) {
  auto& server = impl_->server;
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  for (const char* p : {"/v1/health", "/v1/model"}) server.Get(p, route);
  for (const char* p : {"/v1/diagnose", "/v1/solve", "/v1/transport", "/v1/recourse"}) server.Post(p, route);
  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const HttpResponse r = error_response(res.status, res.status == 404 ? "not_found" : "http_error",
                                          req.method + " " + req.path + " failed");
    res.set_content(r.body, "application/json");
  });
  // httplib's default enables SO_REUSEPORT, which would let a second service
  // share a busy port instead of failing.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  const auto timeout_s = impl_->config.request_timeout_ms / 1000;
  const auto timeout_us = (impl_->config.request_timeout_ms % 1000) * 1000;
  server.set_read_timeout(timeout_s, timeout_us);
  server.set_write_timeout(timeout_s, timeout_us);

  if (any_port) {
    impl_->bound_port = server.bind_to_any_port(impl_->config.host);
  } else {
    impl_->bound_port = server.bind_to_port(impl_->config.host, impl_->config.port) ? impl_->config.port : -1;
  }
  if (impl_->bound_port < 0)
    throw Error(ErrorCode::kIo, "cannot bind " + impl_->config.host + ":" + std::to_string(impl_->config.port) +
                                    " (port busy or address unavailable)");
  return impl_->bound_port;
}

void Service::run() {
  if (impl_->bound_port < 0) throw Error(ErrorCode::kConfiguration, "run() called before bind()");
  impl_->server.listen_after_bind();
}

void Service::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace rox
