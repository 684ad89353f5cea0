#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <random>
#include <vector>

#include "hrlmg/hrlmg.hpp"

namespace hrlmg::testing {

// Small enough for full-coordinate finite differences.
inline NetworkShape tiny_shape() {
  NetworkShape s;
  s.item_dim = 4;
  s.window = 3;
  s.hidden = 3;
  s.state_dim = 4;
  s.critic_hidden = 5;
  s.bound = 1.0;
  return s;
}

template <class P>
void randomize(P& block, Rng& rng, double scale = 0.5) {
  for_each_tensor(block, [&](const std::string&, auto& m) { fill_uniform(m, scale, rng); });
}

inline HistoryWindow random_window(WindowKind kind, std::size_t capacity, std::size_t length, Index n_items, Rng& rng) {
  HistoryWindow w(kind, capacity);
  std::uniform_int_distribution<Index> pick(0, n_items - 1);
  for (std::size_t i = 0; i < length; ++i) w.push(pick(rng));
  return w;
}

inline Tensor1<double> vec(std::initializer_list<double> v) {
  Tensor1<double> out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Catalog whose item k has the k-th given embedding column.
inline Catalog<double> catalog_of(std::initializer_list<std::initializer_list<double>> rows_per_item) {
  const Index n = static_cast<Index>(rows_per_item.size());
  const Index d = static_cast<Index>(rows_per_item.begin()->size());
  Tensor2<double> emb(d, n);
  std::vector<ItemId> ids;
  Index k = 0;
  for (auto item : rows_per_item) {
    Index j = 0;
    for (double x : item) emb(j++, k) = x;
    ids.push_back(k++);
  }
  return Catalog<double>(ids, emb);
}

}  // namespace hrlmg::testing
