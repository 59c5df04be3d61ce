#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "rox/corpus.hpp"
#include "rox/model.hpp"

namespace rox {

/// Runtime settings for the HTTP service. File format is one `key = value`
/// per line; `#` starts a comment. Keys: model_path, host, port, top_k,
/// k_retrieve, llm.url, embedder.url, request_timeout_ms,
/// max_concurrent_generations, corpus_path.
struct ServiceConfig {
  std::string model_path;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t top_k = 5;
  std::size_t k_retrieve = 6;
  std::string llm_url;
  std::string embedder_url;
  int request_timeout_ms = 30000;
  std::size_t max_concurrent_generations = 4;
  std::string corpus_path;  // enables recourse by record_id

  /// Throws Error{kConfiguration} for an unknown key or an unparseable value.
  void set(std::string_view key, std::string_view value);
  /// Throws Error{kConfiguration} when an invariant is violated.
  void validate() const;
};

ServiceConfig parse_service_config(std::string_view text);
ServiceConfig load_service_config(const std::filesystem::path& path);

struct HttpResponse {
  int status = 200;
  std::string body;  // JSON
};

/// JSON API over an immutable model snapshot. Request handling is available
/// without a socket through handle(); start()/run() expose it over HTTP.
class Service {
 public:
  /// Loads the model (and the corpus when configured) before anything binds.
  explicit Service(ServiceConfig config);
  /// Serves an in-memory model; no reload source.
  Service(ServiceConfig config, CbnModel model, std::optional<Corpus> corpus = std::nullopt);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  HttpResponse handle(std::string_view method, std::string_view path, std::string_view body) const;

  /// Binds the configured port, or an ephemeral one when `any_port` is set.
  /// Returns the bound port; throws Error{kIo} when binding fails.
  int bind(bool any_port = false);
  /// Blocks serving requests until stop().
  void run();
  /// Stops accepting; in-flight requests finish before run() returns.
  void stop();
  /// Re-reads model_path (and corpus_path) and swaps the snapshot atomically.
  void reload();

  const ServiceConfig& config() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rox
