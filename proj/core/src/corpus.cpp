#include "rox/corpus.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "rox/error.hpp"

namespace rox {
namespace {

using nlohmann::json;

constexpr std::size_t kReportedRows = 10;

const char* const kRequired[] = {"environment", "subsystem", "root_cause",
                                 "observation", "solution"};

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Builder {
 public:
  Builder(const TextOptions& text) : text_(text) {}

  // `fields` lacks record_id when the source did not provide one.
  void add(std::size_t row, std::optional<std::string> record_id,
           RoxRecord fields) {
    if (fields.environment.empty() || fields.subsystem.empty() ||
        fields.root_cause.empty() ||
        clean_text(fields.observation, text_).empty() ||
        clean_text(fields.solution, text_).empty()) {
      skip(row);
      return;
    }
    fields.record_id = record_id ? *record_id : std::to_string(row);
    if (!ids_.insert(fields.record_id).second) {
      throw Error(ErrorCode::kDuplicateId,
                  "duplicate record_id '" + fields.record_id + "' at row " +
                      std::to_string(row));
    }
    records_.push_back(std::move(fields));
  }

  void skip(std::size_t row) {
    ++report_.skipped;
    if (report_.skipped_rows.size() < kReportedRows) report_.skipped_rows.push_back(row);
  }

  IngestResult finish(std::string source_name) {
    if (records_.empty())
      throw Error(ErrorCode::kEmptyCorpus, "no valid records in " +
                                               (source_name.empty() ? std::string("input") : source_name));
    report_.accepted = records_.size();
    IngestResult result{Corpus::from_records(std::move(records_), std::move(source_name)),
                        report_};
    result.corpus.ingested_at = utc_now();
    return result;
  }

 private:
  const TextOptions& text_;
  std::vector<RoxRecord> records_;
  std::unordered_set<std::string> ids_;
  IngestReport report_;
};

std::optional<std::string> json_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  return std::nullopt;
}

void ingest_jsonl(std::string_view text, Builder& builder) {
  std::size_t row = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    const std::size_t this_row = row++;
    json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (!obj.is_object()) {
      builder.skip(this_row);
      continue;
    }
    RoxRecord rec;
    std::string* slots[] = {&rec.environment, &rec.subsystem, &rec.root_cause,
                            &rec.observation, &rec.solution};
    bool ok = true;
    for (std::size_t k = 0; k < 5; ++k) {
      auto value = json_string(obj, kRequired[k]);
      if (!value) {
        ok = false;
        break;
      }
      *slots[k] = std::move(*value);
    }
    if (!ok) {
      builder.skip(this_row);
      continue;
    }
    std::optional<std::string> id;
    if (obj.contains("record_id")) {
      id = json_string(obj, "record_id");
      if (!id || id->empty()) {
        builder.skip(this_row);
        continue;
      }
    }
    builder.add(this_row, std::move(id), std::move(rec));
  }
}

void ingest_csv(std::string_view text, Builder& builder) {
  auto rows = parse_csv(text);
  if (rows.empty()) return;
  const auto& header = rows.front();
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
  for (const char* key : kRequired) {
    if (!column.contains(key))
      throw Error(ErrorCode::kIngest, std::string("CSV header lacks column '") + key + "'");
  }
  const auto id_col = column.find("record_id");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::size_t row = r - 1;
    const auto& fields = rows[r];
    if (fields.size() != header.size()) {
      builder.skip(row);
      continue;
    }
    RoxRecord rec{{},
                  fields[column["environment"]],
                  fields[column["subsystem"]],
                  fields[column["root_cause"]],
                  fields[column["observation"]],
                  fields[column["solution"]]};
    std::optional<std::string> id;
    if (id_col != column.end() && !fields[id_col->second].empty())
      id = fields[id_col->second];
    builder.add(row, std::move(id), std::move(rec));
  }
}

}  // namespace

Corpus Corpus::from_records(std::vector<RoxRecord> records, std::string source) {
  Corpus c;
  c.records = std::move(records);
  for (const auto& r : c.records) c.environments.insert(r.environment);
  c.source = std::move(source);
  return c;
}

const RoxRecord* Corpus::find(std::string_view record_id) const {
  for (const auto& r : records)
    if (r.record_id == record_id) return &r;
  return nullptr;
}

InputFormat format_for_path(std::string_view path) {
  auto lower = std::string(path);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower.ends_with(".csv") ? InputFormat::kCsv : InputFormat::kJsonl;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_has_content = false;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    if (row_has_content || row.size() > 1 || !row.front().empty()) rows.push_back(std::move(row));
    row.clear();
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        end_field();
        row_has_content = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_row();
        break;
      case '\n':
        end_row();
        break;
      default:
        field.push_back(c);
        row_has_content = true;
    }
  }
  if (row_has_content || !field.empty() || !row.empty()) end_row();
  return rows;
}

IngestResult ingest(std::istream& source, InputFormat format,
                    const TextOptions& text, std::string source_name) {
  if (!source) throw Error(ErrorCode::kIngest, "unreadable input stream " + source_name);
  std::ostringstream buffer;
  buffer << source.rdbuf();
  if (source.bad()) throw Error(ErrorCode::kIngest, "read failure on " + source_name);
  const std::string bytes = buffer.str();
  if (!is_valid_utf8(bytes))
    throw Error(ErrorCode::kIngest, "input is not valid UTF-8: " + source_name);

  Builder builder(text);
  if (format == InputFormat::kJsonl)
    ingest_jsonl(bytes, builder);
  else
    ingest_csv(bytes, builder);
  return builder.finish(std::move(source_name));
}

IngestResult ingest_file(const std::string& path, const TextOptions& text) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIngest, "cannot open '" + path + "'");
  return ingest(in, format_for_path(path), text, path);
}

void export_jsonl(const Corpus& corpus, std::ostream& out) {
  for (const auto& r : corpus.records) {
    nlohmann::ordered_json obj;
    obj["record_id"] = r.record_id;
    obj["environment"] = r.environment;
    obj["subsystem"] = r.subsystem;
    obj["root_cause"] = r.root_cause;
    obj["observation"] = r.observation;
    obj["solution"] = r.solution;
    out << obj.dump() << '\n';
  }
}

std::pair<Corpus, Corpus> split(const Corpus& corpus, double train_fraction,
                                std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error(ErrorCode::kArgument, "train_fraction must lie in (0, 1)");
  const std::size_t n = corpus.records.size();
  if (n < 2) throw Error(ErrorCode::kArgument, "split needs at least 2 records");

  std::mt19937_64 rng(seed);

  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < n; ++i) strata[corpus.records[i].root_cause].push_back(i);

  struct Quota {
    std::vector<std::size_t>* members;
    std::size_t lo, hi, take;
    double remainder;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (auto& [cause, members] : strata) {
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t m = members.size();
    const std::size_t lo = m >= 2 ? 1 : 0;
    const std::size_t hi = m >= 2 ? m - 1 : m;
    const double exact = train_fraction * static_cast<double>(m);
    std::size_t take = std::clamp(static_cast<std::size_t>(std::floor(exact)), lo, hi);
    quotas.push_back({&members, lo, hi, take, exact - std::floor(exact)});
    assigned += take;
  }

  std::size_t target = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  target = std::clamp<std::size_t>(target, 1, n - 1);

  // Largest-remainder adjustment toward the exact overall target.
  std::vector<std::size_t> order(quotas.size());
  std::iota(order.begin(), order.end(), 0);
  if (assigned < target) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return quotas[a].remainder > quotas[b].remainder;
    });
    for (bool progress = true; assigned < target && progress;) {
      progress = false;
      for (std::size_t q : order) {
        if (assigned == target) break;
        if (quotas[q].take < quotas[q].hi) {
          ++quotas[q].take;
          ++assigned;
          progress = true;
        }
      }
    }
  } else if (assigned > target) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return quotas[a].remainder < quotas[b].remainder;
    });
    for (bool progress = true; assigned > target && progress;) {
      progress = false;
      for (std::size_t q : order) {
        if (assigned == target) break;
        if (quotas[q].take > quotas[q].lo) {
          --quotas[q].take;
          --assigned;
          progress = true;
        }
      }
    }
  }

  std::vector<std::size_t> train_idx, test_idx;
  for (const auto& q : quotas) {
    train_idx.insert(train_idx.end(), q.members->begin(), q.members->begin() + q.take);
    test_idx.insert(test_idx.end(), q.members->begin() + q.take, q.members->end());
  }
  std::shuffle(train_idx.begin(), train_idx.end(), rng);
  std::shuffle(test_idx.begin(), test_idx.end(), rng);

  auto gather = [&](const std::vector<std::size_t>& idx) {
    std::vector<RoxRecord> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(corpus.records[i]);
    Corpus c = Corpus::from_records(std::move(out), corpus.source);
    c.ingested_at = corpus.ingested_at;
    return c;
  };
  return {gather(train_idx), gather(test_idx)};
}

}  // namespace rox
