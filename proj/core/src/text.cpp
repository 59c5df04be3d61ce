#include "rox/text.hpp"

#include <fstream>

#include "rox/error.hpp"

namespace rox {
namespace {

constexpr const char* kStopwords[] = {
    "a",       "about",   "above",  "after",   "again",  "against", "all",
    "am",      "an",      "and",    "any",     "are",    "as",      "at",
    "be",      "because", "been",   "before",  "being",  "below",   "between",
    "both",    "but",     "by",     "can",     "could",  "did",     "do",
    "does",    "doing",   "down",   "during",  "each",   "either",  "else",
    "ever",    "every",   "few",    "for",     "from",   "further", "had",
    "has",     "have",    "having", "he",      "her",    "here",    "hers",
    "herself", "him",     "himself", "his",    "how",    "i",       "if",
    "in",      "into",    "is",     "it",      "its",    "itself",  "just",
    "may",     "me",      "might",  "more",    "most",   "must",    "my",
    "myself",  "neither", "no",     "nor",     "not",    "now",     "of",
    "off",     "on",      "once",   "only",    "or",     "other",   "ought",
    "our",     "ours",    "ourselves", "out",  "over",   "own",     "same",
    "shall",   "she",     "should", "so",      "some",   "such",    "than",
    "that",    "the",     "their",  "theirs",  "them",   "themselves", "then",
    "there",   "these",   "they",   "this",    "those",  "through", "thus",
    "to",      "too",     "under",  "until",   "up",     "upon",    "us",
    "very",    "was",     "we",     "were",    "what",   "when",    "where",
    "whether", "which",   "while",  "who",     "whom",   "whose",   "why",
    "will",    "with",    "within", "without", "would",  "yet",     "you",
    "your",    "yours",   "yourself", "yourselves", "also", "although",
    "among",   "another", "around", "whereas",
};

bool is_vowel(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
}

bool has_vowel(std::string_view s) {
  for (char c : s)
    if (is_vowel(c)) return true;
  return false;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

// Repair after removing -ed / -ing: undouble a trailing consonant pair or
// restore a silent 'e' after soft consonants.
std::string repair(std::string base) {
  const std::size_t n = base.size();
  if (n >= 2 && base[n - 1] == base[n - 2] && !is_vowel(base[n - 1]) &&
      base[n - 1] != 'l' && base[n - 1] != 's' && base[n - 1] != 'z') {
    base.pop_back();
    return base;
  }
  if (n >= 1) {
    const char last = base[n - 1];
    if (last == 'c' || last == 'g' || last == 's' || last == 'v' ||
        last == 'z' || ends_with(base, "ur")) {
      if (ends_with(base, "ss")) return base;
      base.push_back('e');
    }
  }
  return base;
}

// One rule application; returns the input unchanged when no rule fires.
std::string stem_once(const std::string& w) {
  if (ends_with(w, "sses")) return w.substr(0, w.size() - 2);
  if (ends_with(w, "ies") && w.size() - 3 + 1 >= 3)
    return w.substr(0, w.size() - 3) + "y";
  if (ends_with(w, "ing")) {
    const std::string base = w.substr(0, w.size() - 3);
    if (base.size() >= 3 && has_vowel(base)) return repair(base);
  }
  if (ends_with(w, "ed") && !ends_with(w, "eed")) {
    const std::string base = w.substr(0, w.size() - 2);
    if (base.size() >= 3 && has_vowel(base)) return repair(base);
  }
  if (ends_with(w, "s") && w.size() - 1 >= 3) {
    const char prev = w[w.size() - 2];
    if (prev != 's' && prev != 'u' && prev != 'i') return w.substr(0, w.size() - 1);
  }
  return w;
}

// Decodes one code point starting at `i`; advances `i`. Invalid sequences
// yield U+FFFD and consume a single byte.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  if (i + len > s.size()) {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  static constexpr char32_t kMinForLength[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMinForLength[len]) {  // overlong encoding
    ++i;
    return 0xFFFD;
  }
  i += len;
  return cp;
}

bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

std::string normalize_token(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 'A' && c <= 'Z') {
      out.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

}  // namespace

std::string CleanText::joined() const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

TextOptions TextOptions::defaults() { return TextOptions{default_stopwords(), true}; }

const StopwordSet& default_stopwords() {
  static const StopwordSet words(std::begin(kStopwords), std::end(kStopwords));
  return words;
}

StopwordSet load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read stopword file " + path.string());
  StopwordSet words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.front() == '#') continue;
    std::string token = normalize_token(line);
    if (!token.empty()) words.insert(std::move(token));
  }
  return words;
}

std::string stem(std::string_view word) {
  std::string current(word);
  for (;;) {
    std::string next = stem_once(current);
    if (next == current) return current;
    current = std::move(next);
  }
}

CleanText clean_text(std::string_view raw, const StopwordSet& stopwords,
                     bool stemming, std::string source_id) {
  CleanText out;
  out.source_id = std::move(source_id);

  std::string word;  // ASCII bytes of the current whitespace-delimited word
  auto flush = [&] {
    std::string token = normalize_token(word);
    word.clear();
    if (token.empty() || stopwords.contains(token)) return;
    if (stemming) {
      token = stem(token);
      if (stopwords.contains(token)) return;
    }
    out.tokens.push_back(std::move(token));
  };

  std::size_t i = 0;
  while (i < raw.size()) {
    const char32_t cp = next_code_point(raw, i);
    if (is_unicode_space(cp)) {
      flush();
    } else if (cp < 0x80) {
      word.push_back(static_cast<char>(cp));
    }
  }
  flush();
  return out;
}

bool is_valid_utf8(std::string_view bytes) {
  std::size_t i = 0;
  while (i < bytes.size()) {
    const std::size_t start = i;
    const char32_t cp = next_code_point(bytes, i);
    if (cp == 0xFFFD) {
      // A literal U+FFFD is three bytes; anything else was a decode failure.
      if (i - start != 3) return false;
    }
    if (cp >= 0xD800 && cp <= 0xDFFF) return false;
    if (cp > 0x10FFFF) return false;
  }
  return true;
}

}  // namespace rox
