#pragma once

#include <cstddef>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "rox/corpus.hpp"
#include "rox/inference.hpp"
#include "rox/quantizer.hpp"
#include "rox/solution_index.hpp"

namespace rox {

/// Indexes every record under its solution category. Throws
/// Error{kConsistency} if the quantizer yields a category outside its codebook.
SolutionIndex build_index(const Corpus& corpus, const Quantizer& solution_quantizer,
                          const TextOptions& text);

/// First `k` texts of a bucket by ascending centroid distance.
std::vector<std::string> retrieve(const SolutionIndex& index, CategoryId category, std::size_t k);

namespace templates {
/// Prompt fragments with {O}, {C}, {S} and {Q} placeholders, compiled in from
/// the template assets.
std::string_view query();
std::string_view instruction();
std::string_view safety();
/// FNV-1a 64 over the three fragments concatenated in the order above.
std::uint64_t checksum();
inline constexpr std::uint64_t kPinnedChecksum = 0x5b18e7a336a3a4e7ULL;
}  // namespace templates

struct PromptBundle {
  std::string query_block;
  std::string instruction_block;
  std::string safety_block;
  std::string assembled;
  std::vector<std::string> solutions;  // retrieved exemplars, in order
};

std::string render_causes(const RankedDistribution& causes);
std::string render_solutions(const std::vector<std::string>& solutions);

PromptBundle build_prompt(std::string_view observation_text, const RankedDistribution& causes,
                          const std::vector<std::string>& solutions);

struct Advisory {
  std::vector<std::string> options;
  std::string raw_generation;
  std::string provenance;
};

/// Option lines are "- Option ..." / "- Solution ..." (dash or asterisk
/// bullet, case-insensitive keyword). Returns the text after the bullet.
std::vector<std::string> parse_options(std::string_view generation);
/// Inverse of parse_options for a list of options.
std::string format_options(const std::vector<std::string>& options);

class Generator {
 public:
  virtual ~Generator() = default;
  virtual Advisory generate(const PromptBundle& prompt) = 0;
};

/// Offline generator: one "- Option n : ..." line per retrieved solution.
class StubGenerator final : public Generator {
 public:
  Advisory generate(const PromptBundle& prompt) override;
};

struct RemoteGeneratorConfig {
  std::string url;
  int timeout_ms = 30000;
  int max_tokens = 512;
  std::size_t max_concurrent = 4;
  std::string api_key;  // sent as a bearer token; never logged
};

/// POST {"prompt", "max_tokens"} -> {"text"}.
class RemoteGenerator final : public Generator {
 public:
  explicit RemoteGenerator(RemoteGeneratorConfig config);
  Advisory generate(const PromptBundle& prompt) override;

 private:
  RemoteGeneratorConfig config_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
};

/// Imperative-style prefix of a retrieved text used by the stub: first 12
/// words with the leading letter capitalized.
std::string imperative_prefix(std::string_view text);

}  // namespace rox
