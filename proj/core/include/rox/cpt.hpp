#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rox {

/// Variables of the troubleshooting graph, in topological order.
enum class Var : std::uint8_t { Z = 0, C = 1, O = 2, S = 3 };
inline constexpr std::size_t kNumVars = 4;
inline constexpr std::array<Var, kNumVars> kAllVars = {Var::Z, Var::C, Var::O, Var::S};

constexpr std::size_t idx(Var v) { return static_cast<std::size_t>(v); }
std::string_view to_string(Var v);
std::optional<Var> parse_var(std::string_view name);

/// Full assignment of (Z, C, O, S) as domain indices.
using Assignment = std::array<std::size_t, kNumVars>;
using DomainSizes = std::array<std::size_t, kNumVars>;

class CategoricalDomain {
 public:
  CategoricalDomain() = default;
  /// Throws Error{kArgument} on an empty or duplicated label list.
  CategoricalDomain(Var var, std::vector<std::string> labels);

  Var var() const noexcept { return var_; }
  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& label(std::size_t i) const { return labels_.at(i); }

  std::optional<std::size_t> find(std::string_view label) const;
  /// Throws Error{kDomain} naming the variable and the label.
  std::size_t index(std::string_view label) const;

  friend bool operator==(const CategoricalDomain& a, const CategoricalDomain& b) {
    return a.var_ == b.var_ && a.labels_ == b.labels_;
  }

 private:
  Var var_ = Var::Z;
  std::vector<std::string> labels_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Conditional probability table P(child | parents) with additive smoothing.
///
/// Counts are kept only for contexts that were observed. A lookup walks the
/// context chain (full parent set, then each configured backoff subset) and
/// uses the first level whose context has data:
///
///   P(x | ctx) = (count(ctx, x) + alpha) / (total(ctx) + alpha * |X|)
///
/// and falls through to the uniform distribution when no level has data.
/// A table built with from_table() holds explicit probabilities instead.
class SparseCpt {
 public:
  struct ContextCounts {
    std::uint64_t total = 0;
    std::map<std::uint32_t, std::uint64_t> counts;

    friend bool operator==(const ContextCounts&, const ContextCounts&) = default;
  };
  using Level = std::map<std::uint64_t, ContextCounts>;

  SparseCpt() = default;
  SparseCpt(Var child, std::vector<Var> parents, const DomainSizes& sizes, double alpha,
            std::vector<std::vector<Var>> backoff = {});

  /// `rows` is laid out as [context][child] with contexts in mixed radix over
  /// `parents` (first parent most significant). Rows must be positive and
  /// sum to 1.
  static SparseCpt from_table(Var child, std::vector<Var> parents, const DomainSizes& sizes,
                              std::vector<double> rows);

  void observe(const Assignment& a, std::uint64_t count = 1);

  double probability(const Assignment& a) const;
  /// Fills `out` (size |child|) with P(. | parents of a).
  void row(const Assignment& a, std::span<double> out) const;

  Var child() const noexcept { return child_; }
  const std::vector<Var>& parents() const noexcept { return parents_; }
  const std::vector<std::vector<Var>>& backoff() const noexcept { return backoff_; }
  double alpha() const noexcept { return alpha_; }
  std::size_t child_size() const noexcept { return sizes_[idx(child_)]; }
  const DomainSizes& sizes() const noexcept { return sizes_; }
  bool is_table() const noexcept { return !table_.empty(); }
  const std::vector<double>& table() const noexcept { return table_; }
  /// Observed full-parent contexts.
  const Level& contexts() const { return levels_.front(); }
  std::size_t context_count() const;  // number of distinct full-parent contexts

  std::uint64_t context_key(const Assignment& a, const std::vector<Var>& over) const;
  /// Inverse of context_key for the full parent list.
  Assignment decode_context(std::uint64_t key) const;

  /// Same counts, different smoothing.
  SparseCpt with_alpha(double alpha) const;

  friend bool operator==(const SparseCpt&, const SparseCpt&) = default;

 private:
  // Returns the level whose context for `a` has data, or nullptr for uniform.
  const ContextCounts* resolve(const Assignment& a) const;

  Var child_ = Var::Z;
  std::vector<Var> parents_;
  DomainSizes sizes_{};
  double alpha_ = 1.0;
  std::vector<std::vector<Var>> backoff_;
  std::vector<Level> levels_;  // [0] = full parents, then one per backoff subset
  std::vector<double> table_;
};

}  // namespace rox
