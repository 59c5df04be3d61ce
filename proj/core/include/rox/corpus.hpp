#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rox/text.hpp"

namespace rox {

/// One maintenance event.
struct RoxRecord {
  std::string record_id;
  std::string environment;
  std::string subsystem;   // Z
  std::string root_cause;  // C
  std::string observation; // O, raw
  std::string solution;    // S, raw

  friend bool operator==(const RoxRecord&, const RoxRecord&) = default;
};

struct Corpus {
  std::vector<RoxRecord> records;
  std::set<std::string> environments;
  std::string source;
  std::string ingested_at;

  /// Builds a corpus and derives `environments` from the records.
  static Corpus from_records(std::vector<RoxRecord> records, std::string source = {});

  const RoxRecord* find(std::string_view record_id) const;
  std::size_t size() const noexcept { return records.size(); }

  /// Provenance is not part of identity.
  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.records == b.records && a.environments == b.environments;
  }
};

enum class InputFormat { kJsonl, kCsv };

/// Picks the format from a file extension (".csv" -> CSV, anything else JSONL).
InputFormat format_for_path(std::string_view path);

struct IngestReport {
  std::size_t accepted = 0;
  std::size_t skipped = 0;
  std::vector<std::size_t> skipped_rows;  // first 10, zero-based row ordinals
};

struct IngestResult {
  Corpus corpus;
  IngestReport report;
};

/// Reads RoX records. Rows missing a required field, carrying an empty label,
/// or whose observation/solution clean to nothing are skipped and tallied.
/// Throws Error{kIngest} for an unreadable or non-UTF-8 stream,
/// Error{kDuplicateId} for a repeated record_id and Error{kEmptyCorpus} when
/// nothing survives.
IngestResult ingest(std::istream& source, InputFormat format,
                    const TextOptions& text = TextOptions::defaults(),
                    std::string source_name = {});

IngestResult ingest_file(const std::string& path,
                         const TextOptions& text = TextOptions::defaults());

void export_jsonl(const Corpus& corpus, std::ostream& out);

/// Stratified (by root_cause) deterministic split. The train share is
/// round(train_fraction * n); every cause with at least two records lands in
/// both halves.
std::pair<Corpus, Corpus> split(const Corpus& corpus, double train_fraction,
                                std::uint64_t seed);

/// RFC-4180 record parser; exposed for tests.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace rox
