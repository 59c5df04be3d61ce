#include "rox/advisory.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "hashing.hpp"
#include "rox/error.hpp"
#include "url.hpp"

namespace rox {

namespace templates::data {
extern const std::string_view kQuery;
extern const std::string_view kInstruction;
extern const std::string_view kSafety;
}  // namespace templates::data

namespace {

struct Slot {
  std::string_view token;
  std::string_view value;
};

// Single left-to-right pass so substituted text is never re-scanned.
std::string substitute(std::string_view tpl, std::initializer_list<Slot> slots) {
  std::string out;
  out.reserve(tpl.size() + 256);
  std::size_t i = 0;
  while (i < tpl.size()) {
    bool replaced = false;
    if (tpl[i] == '{') {
      for (const auto& slot : slots) {
        if (tpl.substr(i, slot.token.size()) == slot.token) {
          out += slot.value;
          i += slot.token.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(tpl[i++]);
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
  return true;
}

}  // namespace

SolutionIndex build_index(const Corpus& corpus, const Quantizer& solution_quantizer,
                          const TextOptions& text) {
  const auto& book = solution_quantizer.codebook;
  SolutionIndex index;
  index.buckets.resize(book.size());
  for (const auto& r : corpus.records) {
    const EmbeddingVector reduced = solution_quantizer.project(clean_text(r.solution, text, r.record_id));
    const CategoryId cat = book.nearest(reduced);
    if (cat >= book.size())
      throw Error(ErrorCode::kConsistency, "solution category " + std::to_string(cat) +
                                               " is not in the codebook (record " + r.record_id + ")");
    index.buckets[cat].push_back(
        {r.record_id, r.solution, cosine_distance(reduced.values, book.categories[cat].centroid)});
  }
  for (auto& bucket : index.buckets) {
    std::sort(bucket.begin(), bucket.end(), [](const IndexedSolution& a, const IndexedSolution& b) {
      if (a.distance != b.distance) return a.distance < b.distance;
      return a.record_id < b.record_id;
    });
  }
  return index;
}

std::vector<std::string> retrieve(const SolutionIndex& index, CategoryId category, std::size_t k) {
  if (category >= index.buckets.size())
    throw Error(ErrorCode::kLookup, "solution category " + std::to_string(category) + " is not indexed");
  const auto& bucket = index.buckets[category];
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, bucket.size()); ++i) out.push_back(bucket[i].text);
  return out;
}

namespace templates {

std::string_view query() { return data::kQuery; }
std::string_view instruction() { return data::kInstruction; }
std::string_view safety() { return data::kSafety; }

std::uint64_t checksum() {
  std::string all;
  all += query();
  all += instruction();
  all += safety();
  return detail::fnv1a64(all);
}

}  // namespace templates

std::string render_causes(const RankedDistribution& causes) {
  std::string out;
  for (const auto& e : causes.entries) {
    char prob[32];
    std::snprintf(prob, sizeof prob, "%.2f", e.probability);
    if (!out.empty()) out += ", ";
    out += e.label + " (p=" + prob + ")";
  }
  return out;
}

std::string render_solutions(const std::vector<std::string>& solutions) {
  if (solutions.empty()) return "none on record";
  std::string out;
  for (std::size_t i = 0; i < solutions.size(); ++i)
    out += "\n" + std::to_string(i + 1) + ". " + std::string(trim(solutions[i]));
  return out;
}

PromptBundle build_prompt(std::string_view observation_text, const RankedDistribution& causes,
                          const std::vector<std::string>& solutions) {
  if (causes.entries.empty()) throw Error(ErrorCode::kArgument, "build_prompt needs at least one cause");
  PromptBundle bundle;
  const std::string cause_text = render_causes(causes);
  const std::string solution_text = render_solutions(solutions);
  bundle.query_block = substitute(templates::query(), {{"{O}", observation_text},
                                                       {"{C}", cause_text},
                                                       {"{S}", solution_text}});
  bundle.instruction_block = std::string(templates::instruction());
  bundle.safety_block = substitute(templates::safety(), {{"{Q}", bundle.query_block}});
  bundle.assembled = bundle.instruction_block + "\n" + bundle.safety_block;
  bundle.solutions = solutions;
  return bundle;
}

std::vector<std::string> parse_options(std::string_view generation) {
  std::vector<std::string> options;
  std::size_t pos = 0;
  while (pos <= generation.size()) {
    std::size_t end = generation.find('\n', pos);
    if (end == std::string_view::npos) end = generation.size();
    std::string_view line = trim(generation.substr(pos, end - pos));
    pos = end + 1;

    std::string_view body;
    if (!line.empty() && (line.front() == '-' || line.front() == '*')) {
      body = trim(line.substr(1));
    } else if (line.starts_with("\xE2\x80\xA2")) {  // U+2022 bullet
      body = trim(line.substr(3));
    } else {
      continue;
    }
    if (starts_with_ci(body, "option") || starts_with_ci(body, "solution"))
      options.emplace_back(body);
  }
  return options;
}

std::string format_options(const std::vector<std::string>& options) {
  std::string out;
  for (const auto& o : options) out += "- " + o + "\n";
  return out;
}

std::string imperative_prefix(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string word, out;
  for (int n = 0; n < 12 && in >> word; ++n) {
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

Advisory StubGenerator::generate(const PromptBundle& prompt) {
  Advisory advisory;
  for (std::size_t i = 0; i < prompt.solutions.size(); ++i)
    advisory.options.push_back("Option " + std::to_string(i + 1) + " : " + imperative_prefix(prompt.solutions[i]));
  advisory.raw_generation = format_options(advisory.options);
  advisory.provenance = "stub";
  return advisory;
}

RemoteGenerator::RemoteGenerator(RemoteGeneratorConfig config) : config_(std::move(config)) {
  if (config_.url.empty()) throw Error(ErrorCode::kConfiguration, "generator url is not configured");
  if (config_.timeout_ms <= 0) throw Error(ErrorCode::kConfiguration, "generator timeout must be > 0");
  if (config_.max_concurrent == 0) throw Error(ErrorCode::kConfiguration, "max_concurrent must be >= 1");
  slots_ = std::make_unique<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(config_.max_concurrent));
}

Advisory RemoteGenerator::generate(const PromptBundle& prompt) {
  const auto target = detail::parse_url(config_.url);
  httplib::Client client(target.origin);
  client.set_connection_timeout(std::chrono::milliseconds(config_.timeout_ms));
  client.set_read_timeout(std::chrono::milliseconds(config_.timeout_ms));
  client.set_write_timeout(std::chrono::milliseconds(config_.timeout_ms));
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  nlohmann::json body = {{"prompt", prompt.assembled}, {"max_tokens", config_.max_tokens}};
  slots_->acquire();
  auto res = client.Post(target.path, headers, body.dump(), "application/json");
  slots_->release();

  if (!res) throw TransportError(config_.url, httplib::to_string(res.error()));
  if (res->status != 200) throw TransportError(config_.url, "HTTP status " + std::to_string(res->status));
  auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string())
    throw TransportError(config_.url, "response lacks a text field");

  Advisory advisory;
  advisory.raw_generation = reply["text"].get<std::string>();
  advisory.options = parse_options(advisory.raw_generation);
  advisory.provenance = reply.contains("model") && reply["model"].is_string()
                            ? reply["model"].get<std::string>()
                            : std::string("remote");
  return advisory;
}

}  // namespace rox
