#pragma once

// Item embedding catalog, synthetic catalog generation and the mapping from
// a continuous (virtual) action to the most similar real item.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hrlmg/io.hpp"
#include "hrlmg/numerics.hpp"
#include "hrlmg/rng.hpp"

namespace hrlmg {

using ItemId = std::int64_t;
inline constexpr ItemId kNoItem = -1;

// Immutable after construction. Items are kept sorted by id, so index order
// and id order agree.
template <class T>
class Catalog {
 public:
  Catalog() = default;

  // embeddings is d x n; column k belongs to ids[k].
  Catalog(std::vector<ItemId> ids, const Tensor2<T>& embeddings, std::vector<int> clusters = {}) {
    require_dims(static_cast<Index>(ids.size()) == embeddings.cols(), "catalog: id count != embedding columns");
    require_dims(clusters.empty() || clusters.size() == ids.size(), "catalog: cluster labels must cover every item");
    if (embeddings.rows() < 1) throw ParameterError("catalog: embedding dimension must be positive");
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ids[a] < ids[b]; });
    const Index n = embeddings.cols();
    ids_.resize(ids.size());
    items_.resize(embeddings.rows(), n);
    unit_.resize(embeddings.rows(), n);
    if (!clusters.empty()) clusters_.resize(ids.size());
    for (Index k = 0; k < n; ++k) {
      const auto src = order[static_cast<std::size_t>(k)];
      ids_[k] = ids[src];
      if (k > 0 && ids_[k] == ids_[k - 1]) throw ParameterError("catalog: duplicate item id " + std::to_string(ids_[k]));
      if (ids_[k] < 0) throw ParameterError("catalog: item ids must be non-negative");
      items_.col(k) = embeddings.col(static_cast<Index>(src));
      if (!items_.col(k).allFinite()) throw NumericError("catalog: non-finite embedding for item " + std::to_string(ids_[k]));
      const T norm = items_.col(k).norm();
      if (!(norm > T(0))) throw DegenerateVectorError("catalog: zero-norm embedding for item " + std::to_string(ids_[k]));
      unit_.col(k) = items_.col(k) / norm;
      if (!clusters.empty()) clusters_[k] = clusters[src];
      index_.emplace(ids_[k], k);
    }
    if (!clusters_.empty()) cluster_count_ = *std::max_element(clusters_.begin(), clusters_.end()) + 1;
  }

  Index dim() const { return items_.rows(); }
  Index size() const { return static_cast<Index>(ids_.size()); }
  bool empty() const { return ids_.empty(); }

  const std::vector<ItemId>& ids() const { return ids_; }
  ItemId id_at(Index k) const { return ids_[static_cast<std::size_t>(k)]; }
  const Tensor2<T>& embeddings() const { return items_; }
  const Tensor2<T>& unit_norms() const { return unit_; }

  bool contains(ItemId id) const { return index_.count(id) != 0; }
  Index index_of(ItemId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ParameterError("catalog: unknown item id " + std::to_string(id));
    return it->second;
  }
  auto embedding(ItemId id) const { return items_.col(index_of(id)); }
  auto unit_norm(ItemId id) const { return unit_.col(index_of(id)); }

  bool has_clusters() const { return !clusters_.empty(); }
  int cluster_count() const { return cluster_count_; }
  std::optional<int> cluster_of(ItemId id) const {
    if (clusters_.empty()) return std::nullopt;
    return clusters_[static_cast<std::size_t>(index_of(id))];
  }

 private:
  std::vector<ItemId> ids_;
  Tensor2<T> items_;
  Tensor2<T> unit_;
  std::vector<int> clusters_;
  int cluster_count_ = 0;
  std::unordered_map<ItemId, Index> index_;
};

// Items not yet recommended in the current session. Only ever shrinks.
template <class T>
class ActiveItemSet {
 public:
  explicit ActiveItemSet(const Catalog<T>& catalog)
      : catalog_(&catalog), active_(static_cast<std::size_t>(catalog.size()), 1), remaining_(catalog.size()) {}

  ActiveItemSet(const Catalog<T>& catalog, std::span<const ItemId> subset)
      : catalog_(&catalog), active_(static_cast<std::size_t>(catalog.size()), 0), remaining_(0) {
    for (ItemId id : subset) {
      auto& flag = active_[static_cast<std::size_t>(catalog.index_of(id))];
      if (!flag) {
        flag = 1;
        ++remaining_;
      }
    }
  }

  const Catalog<T>& catalog() const { return *catalog_; }
  Index size() const { return remaining_; }
  bool empty() const { return remaining_ == 0; }
  bool contains_index(Index k) const { return active_[static_cast<std::size_t>(k)] != 0; }
  bool contains(ItemId id) const { return catalog_->contains(id) && contains_index(catalog_->index_of(id)); }

  void remove(ItemId id) {
    auto& flag = active_[static_cast<std::size_t>(catalog_->index_of(id))];
    if (flag) {
      flag = 0;
      --remaining_;
    }
  }

  std::vector<ItemId> items() const {
    std::vector<ItemId> out;
    out.reserve(static_cast<std::size_t>(remaining_));
    for (Index k = 0; k < catalog_->size(); ++k)
      if (contains_index(k)) out.push_back(catalog_->id_at(k));
    return out;
  }

 private:
  const Catalog<T>* catalog_;
  std::vector<char> active_;
  Index remaining_;
};

template <class T>
struct MappedAction {
  ItemId id = kNoItem;
  Tensor1<T> embedding;
  T score = T(0);  // a_hat . unit(a), i.e. cosine scaled by |a_hat|
};

// Picks the active item with the largest a_hat . (a_i / |a_i|), removes it
// from the active set and returns it. Ties go to the lowest item id. When
// candidates is non-empty the search is restricted to those ids.
template <class T>
MappedAction<T> map_action(const Tensor1<T>& a_hat, ActiveItemSet<T>& active, std::span<const ItemId> candidates = {}) {
  const Catalog<T>& cat = active.catalog();
  require_dims(a_hat.size() == cat.dim(), "map_action: action dimension != catalog dimension");
  if (!a_hat.allFinite()) throw NumericError("map_action: non-finite action");
  if (!(a_hat.norm() > T(0))) throw DegenerateVectorError("map_action: zero-norm action");
  if (active.empty()) throw SessionExhaustedError("map_action: no active items left in the session");
  Index best = -1;
  T best_score = T(0);
  auto consider = [&](Index k, T s) {
    if (best < 0 || s > best_score || (s == best_score && k < best)) {
      best = k;
      best_score = s;
    }
  };
  if (candidates.empty()) {
    const Tensor1<T> scores = cat.unit_norms().transpose() * a_hat;
    for (Index k = 0; k < cat.size(); ++k)
      if (active.contains_index(k)) consider(k, scores[k]);
  } else {
    for (ItemId id : candidates) {
      const Index k = cat.index_of(id);
      if (active.contains_index(k)) consider(k, cat.unit_norms().col(k).dot(a_hat));
    }
    if (best < 0) throw SessionExhaustedError("map_action: no active item among the candidates");
  }
  MappedAction<T> out{cat.id_at(best), cat.embeddings().col(best), best_score};
  active.remove(out.id);
  return out;
}

// Top-k active items by cosine to the query, best first (ties by lowest id).
// A zero query scores every item equally.
template <class T>
std::vector<ItemId> recall_candidates(const Tensor1<T>& query, const ActiveItemSet<T>& active, Index k) {
  if (k < 1) throw ParameterError("recall_candidates: k must be at least 1");
  const Catalog<T>& cat = active.catalog();
  require_dims(query.size() == cat.dim(), "recall_candidates: query dimension != catalog dimension");
  const T qn = query.norm();
  Tensor1<T> scores = cat.unit_norms().transpose() * query;
  if (qn > T(0)) scores /= qn;
  std::vector<Index> pool;
  pool.reserve(static_cast<std::size_t>(active.size()));
  for (Index i = 0; i < cat.size(); ++i)
    if (active.contains_index(i)) pool.push_back(i);
  const auto take = static_cast<std::size_t>(std::min<Index>(k, static_cast<Index>(pool.size())));
  auto better = [&](Index a, Index b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take), pool.end(), better);
  std::vector<ItemId> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(cat.id_at(pool[i]));
  return out;
}

// Cluster centers uniform on the unit sphere; each item is its center plus
// isotropic Gaussian noise of expected norm `noise`. Item i belongs to
// cluster i mod n_clusters.
template <class T>
Catalog<T> generate_catalog(Index n_items, Index d, Index n_clusters, std::uint64_t seed, double noise = 0.5) {
  if (d < 2) throw ParameterError("generate_catalog: dimension must be at least 2");
  if (!(n_clusters >= 1 && n_items >= n_clusters)) throw ParameterError("generate_catalog: need n_items >= n_clusters >= 1");
  if (!(noise >= 0.0)) throw ParameterError("generate_catalog: noise must be non-negative");
  Rng rng = stream_rng(seed, "catalog");
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd centers(d, n_clusters);
  for (Index c = 0; c < n_clusters; ++c) {
    double norm = 0.0;
    while (!(norm > 1e-12)) {
      for (Index j = 0; j < d; ++j) centers(j, c) = normal(rng);
      norm = centers.col(c).norm();
    }
    centers.col(c) /= norm;
  }
  const double scale = noise / std::sqrt(static_cast<double>(d));
  Tensor2<T> items(d, n_items);
  std::vector<ItemId> ids(static_cast<std::size_t>(n_items));
  std::vector<int> labels(static_cast<std::size_t>(n_items));
  for (Index i = 0; i < n_items; ++i) {
    const Index c = i % n_clusters;
    Eigen::VectorXd v;
    do {
      v = centers.col(c);
      for (Index j = 0; j < d; ++j) v[j] += scale * normal(rng);
    } while (!(v.norm() > 1e-12));
    items.col(i) = v.cast<T>();
    ids[static_cast<std::size_t>(i)] = i;
    labels[static_cast<std::size_t>(i)] = static_cast<int>(c);
  }
  return Catalog<T>(std::move(ids), items, std::move(labels));
}

// Text format: "d=<dim>" header, then "<id>\t<v1> <v2> ... <vd>" per item,
// with an optional trailing "\t<cluster>" on every line or on none.
template <class T>
std::string format_catalog(const Catalog<T>& cat) {
  std::string out = "d=" + std::to_string(cat.dim()) + "\n";
  for (Index k = 0; k < cat.size(); ++k) {
    out += std::to_string(cat.id_at(k));
    out += '\t';
    for (Index j = 0; j < cat.dim(); ++j) {
      if (j) out += ' ';
      out += io::format_real(cat.embeddings()(j, k));
    }
    if (cat.has_clusters()) out += '\t' + std::to_string(*cat.cluster_of(cat.id_at(k)));
    out += '\n';
  }
  return out;
}

template <class T>
void save_catalog(const Catalog<T>& cat, const std::filesystem::path& path) {
  io::write_file_atomic(path, format_catalog(cat));
}

template <class T>
Catalog<T> parse_catalog(std::string_view text) {
  auto lines = io::split(text, '\n');
  std::size_t lineno = 0;
  Index d = -1;
  std::vector<ItemId> ids;
  std::vector<T> values;
  std::vector<int> clusters;
  for (auto raw : lines) {
    ++lineno;
    auto line = io::trim(raw);
    if (line.empty()) continue;
    if (d < 0) {
      if (line.substr(0, 2) != "d=") throw ParseError(lineno, "expected header 'd=<dim>'");
      auto dim = io::parse_number<long long>(line.substr(2));
      if (!dim || *dim < 1) throw ParseError(lineno, "invalid dimension in header");
      d = static_cast<Index>(*dim);
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError(lineno, "expected '<item_id>\\t<values>'");
    auto id = io::parse_number<long long>(io::trim(line.substr(0, tab)));
    if (!id) throw ParseError(lineno, "invalid item id");
    auto body = line.substr(tab + 1);
    const auto tab2 = body.find('\t');
    if (!ids.empty() && (tab2 != std::string_view::npos) != !clusters.empty())
      throw ParseError(lineno, "cluster column must be present on every line or on none");
    if (tab2 != std::string_view::npos) {
      auto c = io::parse_number<int>(io::trim(body.substr(tab2 + 1)));
      if (!c || *c < 0) throw ParseError(lineno, "invalid cluster label");
      clusters.push_back(*c);
      body = body.substr(0, tab2);
    }
    auto fields = io::split_whitespace(body);
    if (static_cast<Index>(fields.size()) != d)
      throw ParseError(lineno, "expected " + std::to_string(d) + " values, got " + std::to_string(fields.size()));
    for (auto f : fields) {
      auto v = io::parse_number<T>(f);
      if (!v) throw ParseError(lineno, "invalid number '" + std::string(f) + "'");
      values.push_back(*v);
    }
    ids.push_back(static_cast<ItemId>(*id));
  }
  if (d < 0) throw ParseError(lineno, "missing header 'd=<dim>'");
  Tensor2<T> emb(d, static_cast<Index>(ids.size()));
  for (Index k = 0; k < emb.cols(); ++k)
    for (Index j = 0; j < d; ++j) emb(j, k) = values[static_cast<std::size_t>(k * d + j)];
  return Catalog<T>(std::move(ids), emb, std::move(clusters));
}

template <class T>
Catalog<T> load_catalog(const std::filesystem::path& path) {
  return parse_catalog<T>(io::read_file(path));
}

}  // namespace hrlmg
