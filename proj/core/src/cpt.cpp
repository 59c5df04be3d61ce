#include "rox/cpt.hpp"

#include <algorithm>
#include <cmath>

#include "rox/error.hpp"

namespace rox {

std::string_view to_string(Var v) {
  switch (v) {
    case Var::Z: return "Z";
    case Var::C: return "C";
    case Var::O: return "O";
    case Var::S: return "S";
  }
  return "?";
}

std::optional<Var> parse_var(std::string_view name) {
  for (Var v : kAllVars)
    if (to_string(v) == name) return v;
  return std::nullopt;
}

CategoricalDomain::CategoricalDomain(Var var, std::vector<std::string> labels)
    : var_(var), labels_(std::move(labels)) {
  if (labels_.empty())
    throw Error(ErrorCode::kArgument, "domain " + std::string(to_string(var)) + " is empty");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!index_.emplace(labels_[i], i).second)
      throw Error(ErrorCode::kArgument, "domain " + std::string(to_string(var)) +
                                            " repeats label '" + labels_[i] + "'");
  }
}

std::optional<std::size_t> CategoricalDomain::find(std::string_view label) const {
  auto it = index_.find(label);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t CategoricalDomain::index(std::string_view label) const {
  if (auto i = find(label)) return *i;
  throw Error(ErrorCode::kDomain, "unknown label '" + std::string(label) + "' for variable " +
                                      std::string(to_string(var_)));
}

SparseCpt::SparseCpt(Var child, std::vector<Var> parents, const DomainSizes& sizes, double alpha,
                     std::vector<std::vector<Var>> backoff)
    : child_(child),
      parents_(std::move(parents)),
      sizes_(sizes),
      alpha_(alpha),
      backoff_(std::move(backoff)) {
  if (!(alpha_ > 0.0) || !std::isfinite(alpha_))
    throw Error(ErrorCode::kArgument, "smoothing alpha must be a finite value > 0");
  for (std::size_t s : sizes_)
    if (s == 0) throw Error(ErrorCode::kArgument, "domain sizes must be >= 1");
  for (const auto& subset : backoff_)
    for (Var v : subset)
      if (std::find(parents_.begin(), parents_.end(), v) == parents_.end())
        throw Error(ErrorCode::kArgument, "backoff variable " + std::string(to_string(v)) +
                                              " is not a parent of " +
                                              std::string(to_string(child_)));
  levels_.resize(1 + backoff_.size());
}

SparseCpt SparseCpt::from_table(Var child, std::vector<Var> parents, const DomainSizes& sizes,
                                std::vector<double> rows) {
  SparseCpt cpt(child, std::move(parents), sizes, 1.0);
  std::size_t contexts = 1;
  for (Var p : cpt.parents_) contexts *= sizes[idx(p)];
  const std::size_t k = sizes[idx(child)];
  if (rows.size() != contexts * k)
    throw Error(ErrorCode::kArgument, "CPT table has wrong size for " + std::string(to_string(child)));
  for (std::size_t c = 0; c < contexts; ++c) {
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = rows[c * k + j];
      if (!(p > 0.0) || !std::isfinite(p))
        throw Error(ErrorCode::kArgument, "CPT entries must be positive and finite");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw Error(ErrorCode::kArgument, "CPT row does not sum to 1 for " + std::string(to_string(child)));
  }
  cpt.table_ = std::move(rows);
  return cpt;
}

std::uint64_t SparseCpt::context_key(const Assignment& a, const std::vector<Var>& over) const {
  std::uint64_t key = 0;
  for (Var p : over) key = key * sizes_[idx(p)] + a[idx(p)];
  return key;
}

Assignment SparseCpt::decode_context(std::uint64_t key) const {
  Assignment a{};
  for (auto it = parents_.rbegin(); it != parents_.rend(); ++it) {
    const std::size_t n = sizes_[idx(*it)];
    a[idx(*it)] = key % n;
    key /= n;
  }
  return a;
}

std::size_t SparseCpt::context_count() const { return levels_.empty() ? 0 : levels_.front().size(); }

void SparseCpt::observe(const Assignment& a, std::uint64_t count) {
  if (is_table()) throw Error(ErrorCode::kArgument, "cannot add counts to an explicit CPT");
  for (Var v : kAllVars)
    if (a[idx(v)] >= sizes_[idx(v)])
      throw Error(ErrorCode::kDomain, "index out of range for variable " + std::string(to_string(v)));
  const auto x = static_cast<std::uint32_t>(a[idx(child_)]);
  for (std::size_t level = 0; level < levels_.size(); ++level) {
    const auto& over = level == 0 ? parents_ : backoff_[level - 1];
    auto& ctx = levels_[level][context_key(a, over)];
    ctx.total += count;
    ctx.counts[x] += count;
  }
}

const SparseCpt::ContextCounts* SparseCpt::resolve(const Assignment& a) const {
  for (std::size_t level = 0; level < levels_.size(); ++level) {
    const auto& over = level == 0 ? parents_ : backoff_[level - 1];
    auto it = levels_[level].find(context_key(a, over));
    if (it != levels_[level].end() && it->second.total > 0) return &it->second;
  }
  return nullptr;
}

double SparseCpt::probability(const Assignment& a) const {
  const std::size_t k = child_size();
  const std::size_t x = a[idx(child_)];
  if (is_table()) return table_[context_key(a, parents_) * k + x];
  const ContextCounts* ctx = resolve(a);
  if (!ctx) return 1.0 / static_cast<double>(k);
  auto it = ctx->counts.find(static_cast<std::uint32_t>(x));
  const double n = it == ctx->counts.end() ? 0.0 : static_cast<double>(it->second);
  return (n + alpha_) / (static_cast<double>(ctx->total) + alpha_ * static_cast<double>(k));
}

void SparseCpt::row(const Assignment& a, std::span<double> out) const {
  const std::size_t k = child_size();
  if (out.size() != k) throw Error(ErrorCode::kArgument, "row buffer has wrong size");
  if (is_table()) {
    const std::size_t base = context_key(a, parents_) * k;
    std::copy(table_.begin() + static_cast<std::ptrdiff_t>(base),
              table_.begin() + static_cast<std::ptrdiff_t>(base + k), out.begin());
    return;
  }
  const ContextCounts* ctx = resolve(a);
  if (!ctx) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(k));
    return;
  }
  const double denom = static_cast<double>(ctx->total) + alpha_ * static_cast<double>(k);
  std::fill(out.begin(), out.end(), alpha_ / denom);
  for (const auto& [x, n] : ctx->counts) out[x] = (static_cast<double>(n) + alpha_) / denom;
}

SparseCpt SparseCpt::with_alpha(double alpha) const {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw Error(ErrorCode::kArgument, "smoothing alpha must be a finite value > 0");
  SparseCpt copy = *this;
  copy.alpha_ = alpha;
  return copy;
}

}  // namespace rox
