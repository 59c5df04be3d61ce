#include "rox/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <numeric>

#include <httplib.h>
#include <json.hpp>

#include "hashing.hpp"
#include "rox/error.hpp"
#include "url.hpp"

namespace rox {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize_in_place(EmbeddingVector& v) {
  const double n = l2_norm(v.values);
  if (n == 0.0) {
    v.degenerate = true;
    return;
  }
  for (double& x : v.values) x /= n;
  v.degenerate = false;
}

std::vector<double> unit(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  const double n = l2_norm(out);
  if (n > 0.0)
    for (double& x : out) x /= n;
  return out;
}

const RandomProjection& projection_for(const ReducerSpec& spec) {
  static std::mutex mu;
  static std::map<std::tuple<std::uint64_t, std::size_t, std::size_t, std::uint32_t>,
                  std::unique_ptr<const RandomProjection>>
      cache;
  const auto key = std::make_tuple(spec.seed, spec.input_dim, spec.output_dim, spec.density_inverse);
  std::lock_guard lock(mu);
  auto& slot = cache[key];
  if (!slot) slot = std::make_unique<const RandomProjection>(spec);
  return *slot;
}

}  // namespace

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::kArgument, "cosine_distance: dimension mismatch");
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 1.0;
  return std::clamp(1.0 - dot(a, b) / (na * nb), 0.0, 2.0);
}

EmbeddingVector hashed_embedding(const CleanText& text, std::size_t dim) {
  if (dim < 8) throw Error(ErrorCode::kConfiguration, "embedding dim must be >= 8");
  EmbeddingVector v;
  v.values.assign(dim, 0.0);
  for (const auto& token : text.tokens) {
    const std::uint64_t h = detail::splitmix64(detail::fnv1a64(token));
    const std::size_t bucket = static_cast<std::size_t>(h % dim);
    const double sign = ((h >> 40) & 1U) ? 1.0 : -1.0;
    v.values[bucket] += sign;
  }
  normalize_in_place(v);
  return v;
}

RemoteEmbedder::RemoteEmbedder(std::string url, int timeout_ms)
    : url_(std::move(url)), timeout_ms_(timeout_ms) {
  if (timeout_ms_ <= 0) throw Error(ErrorCode::kConfiguration, "embedder timeout must be > 0");
}

std::vector<EmbeddingVector> RemoteEmbedder::embed(std::span<const CleanText> texts) const {
  const auto target = detail::parse_url(url_);
  httplib::Client client(target.origin);
  client.set_connection_timeout(std::chrono::milliseconds(timeout_ms_));
  client.set_read_timeout(std::chrono::milliseconds(timeout_ms_));

  nlohmann::json body;
  body["texts"] = nlohmann::json::array();
  for (const auto& t : texts) body["texts"].push_back(t.joined());

  auto res = client.Post(target.path, body.dump(), "application/json");
  if (!res) throw TransportError(url_, httplib::to_string(res.error()));
  if (res->status != 200)
    throw TransportError(url_, "HTTP status " + std::to_string(res->status));

  auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (!reply.is_object() || !reply.contains("vectors") || !reply["vectors"].is_array() ||
      reply["vectors"].size() != texts.size())
    throw TransportError(url_, "malformed embedding response");

  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  std::size_t dim = 0;
  for (const auto& row : reply["vectors"]) {
    EmbeddingVector v;
    try {
      v.values = row.get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      throw TransportError(url_, "non-numeric embedding vector");
    }
    if (out.empty()) dim = v.values.size();
    if (v.values.size() != dim || dim == 0)
      throw TransportError(url_, "inconsistent embedding dimensions");
    for (double x : v.values)
      if (!std::isfinite(x)) throw TransportError(url_, "non-finite embedding value");
    normalize_in_place(v);
    out.push_back(std::move(v));
  }
  return out;
}

EmbeddingVector embed(const CleanText& text, const EmbedderConfig& config) {
  if (config.kind == EmbedderKind::kHashed) return hashed_embedding(text, config.dim);
  auto one = embed_all(std::span<const CleanText>(&text, 1), config);
  return std::move(one.front());
}

std::vector<EmbeddingVector> embed_all(std::span<const CleanText> texts,
                                       const EmbedderConfig& config) {
  if (config.kind == EmbedderKind::kRemote) {
    auto out = RemoteEmbedder(config.url, config.timeout_ms).embed(texts);
    // Zero-token texts stay degenerate regardless of what the service says.
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (texts[i].empty()) {
        std::fill(out[i].values.begin(), out[i].values.end(), 0.0);
        out[i].degenerate = true;
      }
    }
    return out;
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hashed_embedding(t, config.dim));
  return out;
}

RandomProjection::RandomProjection(const ReducerSpec& spec) : spec_(spec) {
  if (spec.output_dim == 0 || spec.input_dim == 0 || spec.density_inverse == 0)
    throw Error(ErrorCode::kArgument, "projection dimensions must be positive");
  const double scale = std::sqrt(static_cast<double>(spec.density_inverse) /
                                 static_cast<double>(spec.output_dim));
  const std::uint64_t base = detail::splitmix64(spec.seed);
  columns_.resize(spec.input_dim);
  for (std::size_t i = 0; i < spec.input_dim; ++i) {
    for (std::size_t j = 0; j < spec.output_dim; ++j) {
      const std::uint64_t h = detail::splitmix64(base ^ (i * spec.output_dim + j));
      if (h % spec.density_inverse != 0) continue;
      const double sign = ((h >> 37) & 1U) ? 1.0 : -1.0;
      columns_[i].push_back({static_cast<std::uint32_t>(j), sign * scale});
    }
  }
}

EmbeddingVector RandomProjection::apply(const EmbeddingVector& v) const {
  if (v.dim() != spec_.input_dim)
    throw Error(ErrorCode::kArgument, "projection expects dim " + std::to_string(spec_.input_dim) +
                                          ", got " + std::to_string(v.dim()));
  EmbeddingVector out;
  out.values.assign(spec_.output_dim, 0.0);
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    const double x = v.values[i];
    if (x == 0.0) continue;
    for (const auto& e : columns_[i]) out.values[e.row] += e.value * x;
  }
  out.degenerate = l2_norm(out.values) == 0.0;
  return out;
}

std::vector<EmbeddingVector> reduce(std::span<const EmbeddingVector> vectors,
                                    std::size_t target_dim, std::uint64_t seed) {
  if (vectors.empty()) throw Error(ErrorCode::kArgument, "reduce: no input vectors");
  const std::size_t dim = vectors.front().dim();
  for (const auto& v : vectors)
    if (v.dim() != dim) throw Error(ErrorCode::kArgument, "reduce: dimension mismatch among inputs");
  if (target_dim == 0 || target_dim >= dim)
    throw Error(ErrorCode::kArgument, "reduce: target_dim must be in [1, input dim)");
  const RandomProjection& projection = projection_for(ReducerSpec{seed, dim, target_dim});
  std::vector<EmbeddingVector> out;
  out.reserve(vectors.size());
  for (const auto& v : vectors) out.push_back(projection.apply(v));
  return out;
}

CategoryId Codebook::nearest(const EmbeddingVector& reduced) const {
  if (categories.empty()) throw Error(ErrorCode::kConfiguration, "codebook is empty");
  if (reduced.degenerate || l2_norm(reduced.values) == 0.0) return largest();
  CategoryId best = 0;
  double best_sim = -std::numeric_limits<double>::infinity();
  for (const auto& cat : categories) {
    if (cat.centroid.size() != reduced.dim())
      throw Error(ErrorCode::kArgument, "codebook dimension mismatch");
    const double sim = dot(cat.centroid, reduced.values);
    if (sim > best_sim) {
      best_sim = sim;
      best = cat.id;
    }
  }
  return best;
}

CategoryId Codebook::largest() const {
  if (categories.empty()) throw Error(ErrorCode::kConfiguration, "codebook is empty");
  CategoryId best = 0;
  for (const auto& cat : categories)
    if (cat.member_count > categories[best].member_count) best = cat.id;
  return best;
}

Codebook fit_codebook(std::span<const EmbeddingVector> reduced, const ClusterParams& params,
                      std::vector<Membership>* membership) {
  if (params.min_cluster_size == 0)
    throw Error(ErrorCode::kConfiguration, "min_cluster_size must be >= 1");
  if (!(params.distance_threshold >= 0.0 && params.distance_threshold <= 2.0))
    throw Error(ErrorCode::kConfiguration, "distance_threshold must lie in [0, 2]");
  if (reduced.size() < params.min_cluster_size)
    throw Error(ErrorCode::kConfiguration,
                "need at least min_cluster_size (" + std::to_string(params.min_cluster_size) +
                    ") vectors, got " + std::to_string(reduced.size()));
  const std::size_t dim = reduced.front().dim();
  for (const auto& v : reduced) {
    if (v.dim() != dim) throw Error(ErrorCode::kArgument, "fit_codebook: dimension mismatch");
    for (double x : v.values)
      if (!std::isfinite(x)) throw Error(ErrorCode::kArgument, "fit_codebook: non-finite value");
  }

  // Collapse bitwise-identical inputs into weighted unique points.
  std::map<std::vector<double>, std::size_t> seen;
  std::vector<std::vector<double>> points;  // unit length
  std::vector<std::size_t> weight;
  std::vector<std::ptrdiff_t> point_of(reduced.size(), -1);
  for (std::size_t i = 0; i < reduced.size(); ++i) {
    if (l2_norm(reduced[i].values) == 0.0) continue;
    auto [it, inserted] = seen.try_emplace(reduced[i].values, points.size());
    if (inserted) {
      points.push_back(unit(reduced[i].values));
      weight.push_back(0);
    }
    ++weight[it->second];
    point_of[i] = static_cast<std::ptrdiff_t>(it->second);
  }
  const std::size_t u = points.size();
  if (u == 0) throw Error(ErrorCode::kConfiguration, "fit_codebook: all vectors are degenerate");

  const double thr = params.distance_threshold;
  auto close = [&](std::size_t a, std::size_t b) {
    return std::max(0.0, 1.0 - dot(points[a], points[b])) <= thr;
  };

  std::vector<std::size_t> density(weight);
  for (std::size_t a = 0; a < u; ++a)
    for (std::size_t b = a + 1; b < u; ++b)
      if (close(a, b)) {
        density[a] += weight[b];
        density[b] += weight[a];
      }

  constexpr std::ptrdiff_t kUnassigned = -1;
  std::vector<std::ptrdiff_t> cluster(u, kUnassigned);
  std::ptrdiff_t n_clusters = 0;
  for (std::size_t seed = 0; seed < u; ++seed) {
    if (cluster[seed] != kUnassigned || density[seed] < params.min_cluster_size) continue;
    const std::ptrdiff_t id = n_clusters++;
    cluster[seed] = id;
    std::deque<std::size_t> frontier{seed};
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      for (std::size_t q = 0; q < u; ++q) {
        if (cluster[q] != kUnassigned || !close(p, q)) continue;
        cluster[q] = id;
        if (density[q] >= params.min_cluster_size) frontier.push_back(q);
      }
    }
  }

  // Drop clusters left below the size floor after border contention.
  std::vector<std::size_t> mass(static_cast<std::size_t>(n_clusters), 0);
  for (std::size_t p = 0; p < u; ++p)
    if (cluster[p] != kUnassigned) mass[static_cast<std::size_t>(cluster[p])] += weight[p];
  std::vector<std::ptrdiff_t> remap(static_cast<std::size_t>(n_clusters), kUnassigned);
  std::ptrdiff_t kept = 0;
  for (std::size_t c = 0; c < mass.size(); ++c)
    if (mass[c] >= params.min_cluster_size) remap[c] = kept++;
  for (auto& c : cluster)
    if (c != kUnassigned) c = remap[static_cast<std::size_t>(c)];
  if (kept == 0) {
    std::fill(cluster.begin(), cluster.end(), 0);
    kept = 1;
  }

  Codebook book;
  book.params = params;
  book.categories.resize(static_cast<std::size_t>(kept));
  for (std::size_t c = 0; c < book.categories.size(); ++c) {
    book.categories[c].id = static_cast<CategoryId>(c);
    book.categories[c].centroid.assign(dim, 0.0);
  }
  for (std::size_t p = 0; p < u; ++p) {
    if (cluster[p] == kUnassigned) continue;
    auto& cat = book.categories[static_cast<std::size_t>(cluster[p])];
    for (std::size_t k = 0; k < dim; ++k) cat.centroid[k] += static_cast<double>(weight[p]) * points[p][k];
    cat.member_count += weight[p];
  }
  for (auto& cat : book.categories) {
    const double n = l2_norm(cat.centroid);
    if (n > 0.0) {
      for (double& x : cat.centroid) x /= n;
    } else {
      // Members cancel exactly; fall back to the first member's direction.
      for (std::size_t p = 0; p < u; ++p)
        if (cluster[p] == static_cast<std::ptrdiff_t>(cat.id)) {
          cat.centroid = points[p];
          break;
        }
    }
  }

  std::vector<Membership> point_membership(u);
  for (std::size_t p = 0; p < u; ++p) {
    if (cluster[p] != kUnassigned) {
      point_membership[p] = {static_cast<CategoryId>(cluster[p]), false};
      continue;
    }
    EmbeddingVector probe{points[p], false};
    const CategoryId near = book.nearest(probe);
    point_membership[p] = {near, true};
    book.categories[near].member_count += weight[p];
  }

  if (membership) {
    membership->assign(reduced.size(), Membership{});
    const CategoryId big = book.largest();
    for (std::size_t i = 0; i < reduced.size(); ++i)
      (*membership)[i] = point_of[i] < 0 ? Membership{big, true}
                                         : point_membership[static_cast<std::size_t>(point_of[i])];
  }
  return book;
}

std::string_view to_string(Field field) {
  return field == Field::kObservation ? "observation" : "solution";
}

EmbeddingVector Quantizer::project(const CleanText& text) const {
  const EmbeddingVector full = embed(text, embedder);
  if (full.degenerate) {
    EmbeddingVector zero;
    zero.values.assign(codebook.reducer.output_dim, 0.0);
    zero.degenerate = true;
    return zero;
  }
  return projection_for(codebook.reducer).apply(full);
}

CategoryId Quantizer::assign(const CleanText& text) const { return codebook.nearest(project(text)); }

QuantizerFit fit_quantizer(Field field, std::span<const CleanText> texts,
                           const EmbedderConfig& embedder, std::size_t reduced_dim,
                           std::uint64_t seed, const ClusterParams& params) {
  if (texts.empty()) throw Error(ErrorCode::kConfiguration, "fit_quantizer: no texts");
  auto full = embed_all(texts, embedder);
  QuantizerFit fit;
  fit.reduced = reduce(full, reduced_dim, seed);
  fit.quantizer.field = field;
  fit.quantizer.embedder = embedder;
  fit.quantizer.codebook = fit_codebook(fit.reduced, params, &fit.membership);
  fit.quantizer.codebook.reducer = ReducerSpec{seed, full.front().dim(), reduced_dim};
  return fit;
}

}  // namespace rox
