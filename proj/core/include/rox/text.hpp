#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace rox {

using StopwordSet = std::set<std::string, std::less<>>;

/// Tokenized, normalized text. Tokens are lowercase ASCII alphanumerics,
/// never empty and never in the stopword list used to produce them.
struct CleanText {
  std::vector<std::string> tokens;
  std::string source_id;

  std::string joined() const;
  bool empty() const noexcept { return tokens.empty(); }

  friend bool operator==(const CleanText&, const CleanText&) = default;
};

struct TextOptions {
  StopwordSet stopwords;
  bool stemming = true;

  static TextOptions defaults();

  friend bool operator==(const TextOptions&, const TextOptions&) = default;
};

/// Bundled English function-word list.
const StopwordSet& default_stopwords();

/// One token per line; blank lines and lines starting with '#' are ignored.
/// Entries are normalized the same way as text tokens.
StopwordSet load_stopwords(const std::filesystem::path& path);

/// Light suffix stripper for plural, past and gerund endings. Rules are
/// re-applied until nothing changes, so stem(stem(w)) == stem(w).
std::string stem(std::string_view word);

/// Splits on Unicode whitespace, lowercases, strips every non-alphanumeric
/// character, drops stopwords, optionally stems. Non-ASCII code points are
/// discarded.
CleanText clean_text(std::string_view raw, const StopwordSet& stopwords,
                     bool stemming, std::string source_id = {});

inline CleanText clean_text(std::string_view raw, const TextOptions& options,
                            std::string source_id = {}) {
  return clean_text(raw, options.stopwords, options.stemming,
                    std::move(source_id));
}

/// True iff `bytes` is well-formed UTF-8.
bool is_valid_utf8(std::string_view bytes);

}  // namespace rox
