#pragma once

// Fixed-capacity FIFO experience buffer with uniform sampling (with
// replacement).

#include <cstddef>
#include <random>
#include <vector>

#include "hrlmg/errors.hpp"
#include "hrlmg/numerics.hpp"

namespace hrlmg {

template <class T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ParameterError("replay buffer capacity must be positive");
    ring_.reserve(std::min<std::size_t>(capacity, 4096));
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return ring_.size(); }
  bool empty() const { return ring_.empty(); }
  std::size_t pushes() const { return pushes_; }

  void push(T item) {
    if (ring_.size() < capacity_) {
      ring_.push_back(std::move(item));
    } else {
      ring_[head_] = std::move(item);
      head_ = (head_ + 1) % capacity_;
    }
    ++pushes_;
  }

  // i-th oldest element.
  const T& at(std::size_t i) const {
    if (i >= ring_.size()) throw ParameterError("replay buffer index out of range");
    return ring_[(head_ + i) % ring_.size()];
  }

  std::vector<T> contents() const {
    std::vector<T> out;
    out.reserve(ring_.size());
    for (std::size_t i = 0; i < ring_.size(); ++i) out.push_back(at(i));
    return out;
  }

  // n uniform draws; pointers stay valid until the next push.
  std::vector<const T*> sample(std::size_t n, Rng& rng) const {
    if (n == 0) return {};
    if (ring_.empty()) throw EmptyBufferError("cannot sample from an empty replay buffer");
    std::uniform_int_distribution<std::size_t> pick(0, ring_.size() - 1);
    std::vector<const T*> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) out.push_back(&ring_[pick(rng)]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<T> ring_;
  std::size_t head_ = 0;  // oldest slot once full
  std::size_t pushes_ = 0;
};

}  // namespace hrlmg
