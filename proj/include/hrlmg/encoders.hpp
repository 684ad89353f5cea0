#pragma once

// Dual-GRU state encoders. Two behaviour streams are unrolled separately and
// their final hidden states merged linearly:
//   high level: s^h = W_c h^click_N + W_o h^order_N + b
//   low level:  s^l = W_b h^browse_N + W_c h^click_N + b

#include <deque>
#include <span>
#include <string>
#include <vector>

#include "hrlmg/catalog.hpp"
#include "hrlmg/numerics.hpp"

namespace hrlmg {

enum class WindowKind { Browse, Click, Order };

inline const char* to_string(WindowKind k) {
  switch (k) {
    case WindowKind::Browse: return "browse";
    case WindowKind::Click: return "click";
    case WindowKind::Order: return "order";
  }
  return "?";
}

// The last `capacity` items of one behaviour stream, oldest first.
class HistoryWindow {
 public:
  HistoryWindow() = default;
  HistoryWindow(WindowKind kind, std::size_t capacity) : kind_(kind), capacity_(capacity) {
    if (capacity == 0) throw ParameterError("history window capacity must be positive");
  }

  WindowKind kind() const { return kind_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const std::vector<ItemId>& items() const { return items_; }

  void push(ItemId id) {
    if (items_.size() == capacity_) items_.erase(items_.begin());
    items_.push_back(id);
  }

  friend bool operator==(const HistoryWindow&, const HistoryWindow&) = default;

 private:
  WindowKind kind_ = WindowKind::Browse;
  std::size_t capacity_ = 1;
  std::vector<ItemId> items_;
};

template <class T>
struct DualGruEncoder {
  using Scalar = T;
  GruCell<T> first;
  GruCell<T> second;
  Tensor2<T> w_first;   // S x H
  Tensor2<T> w_second;  // S x H
  Tensor2<T> bias;      // S x 1

  DualGruEncoder() = default;
  DualGruEncoder(Index input, Index hidden, Index state)
      : first(hidden, input), second(hidden, input), w_first(Tensor2<T>::Zero(state, hidden)),
        w_second(Tensor2<T>::Zero(state, hidden)), bias(Tensor2<T>::Zero(state, 1)) {}

  Index input_size() const { return first.input_size(); }
  Index hidden_size() const { return first.hidden_size(); }
  Index state_size() const { return w_first.rows(); }

  void validate() const {
    first.validate();
    second.validate();
    require_dims(second.hidden_size() == first.hidden_size() && second.input_size() == first.input_size(),
                 "encoder: both GRUs must share sizes");
    require_dims(w_first.cols() == hidden_size() && w_second.cols() == hidden_size() &&
                     w_second.rows() == state_size() && bias.rows() == state_size() && bias.cols() == 1,
                 "encoder: merge weights must map H to the state size");
  }

  void init_uniform(Rng& rng) {
    first.init_uniform(rng);
    second.init_uniform(rng);
    const double limit = 1.0 / std::sqrt(static_cast<double>(hidden_size()));
    fill_uniform(w_first, limit, rng);
    fill_uniform(w_second, limit, rng);
    fill_uniform(bias, limit, rng);
  }

  template <class Self, class F>
  static void visit(Self& s, F&& f) {
    visit_prefixed("first.", s.first, f);
    visit_prefixed("second.", s.second, f);
    f("w_first", s.w_first);
    f("w_second", s.w_second);
    f("bias", s.bias);
  }
};

// Materialised windows for a batch: d x (steps*B), time-major, front-padded
// with zero vectors.
template <class T>
struct EncoderInput {
  Tensor2<T> first;
  Tensor2<T> second;
  Index steps = 0;
  Index batch = 0;
};

template <class T>
void fill_window(const Catalog<T>& cat, const HistoryWindow& w, Index steps, Index batch, Index b, Tensor2<T>& out) {
  const auto& items = w.items();
  const Index m = static_cast<Index>(items.size());
  require_dims(m <= steps, "history window longer than the encoder unroll length");
  for (Index t = 0; t < steps - m; ++t) out.col(t * batch + b).setZero();
  for (Index k = 0; k < m; ++k) {
    const ItemId id = items[static_cast<std::size_t>(k)];
    const Index t = steps - m + k;
    if (id == kNoItem)
      out.col(t * batch + b).setZero();
    else
      out.col(t * batch + b) = cat.embedding(id);
  }
}

template <class T>
EncoderInput<T> make_encoder_input(const Catalog<T>& cat, std::span<const HistoryWindow* const> first,
                                   std::span<const HistoryWindow* const> second, Index steps) {
  require_dims(first.size() == second.size(), "encoder input: stream batch sizes differ");
  EncoderInput<T> in;
  in.steps = steps;
  in.batch = static_cast<Index>(first.size());
  in.first.resize(cat.dim(), steps * in.batch);
  in.second.resize(cat.dim(), steps * in.batch);
  for (Index b = 0; b < in.batch; ++b) {
    fill_window(cat, *first[static_cast<std::size_t>(b)], steps, in.batch, b, in.first);
    fill_window(cat, *second[static_cast<std::size_t>(b)], steps, in.batch, b, in.second);
  }
  return in;
}

template <class T>
struct EncoderCache {
  GruSequenceCache<T> first;
  GruSequenceCache<T> second;
  Tensor2<T> h_first;
  Tensor2<T> h_second;
};

template <class T>
Tensor2<T> encode(const DualGruEncoder<T>& p, const EncoderInput<T>& in, EncoderCache<T>& cache) {
  p.validate();
  cache.h_first = gru_sequence(p.first, in.first, in.steps, cache.first);
  cache.h_second = gru_sequence(p.second, in.second, in.steps, cache.second);
  Tensor2<T> s = p.w_first * cache.h_first;
  s.noalias() += p.w_second * cache.h_second;
  s.colwise() += p.bias.col(0);
  return s;
}

template <class T>
Tensor2<T> encode(const DualGruEncoder<T>& p, const EncoderInput<T>& in) {
  EncoderCache<T> cache;
  return encode(p, in, cache);
}

template <class T>
void encode_backward(const DualGruEncoder<T>& p, const EncoderCache<T>& cache, const Tensor2<T>& ds,
                     DualGruEncoder<T>& grads) {
  require_dims(ds.rows() == p.state_size() && ds.cols() == cache.h_first.cols(), "encode_backward: gradient shape");
  grads.w_first.noalias() += ds * cache.h_first.transpose();
  grads.w_second.noalias() += ds * cache.h_second.transpose();
  grads.bias += ds.rowwise().sum();
  const Tensor2<T> dh_first = p.w_first.transpose() * ds;
  const Tensor2<T> dh_second = p.w_second.transpose() * ds;
  gru_sequence_backward(p.first, cache.first, dh_first, grads.first);
  gru_sequence_backward(p.second, cache.second, dh_second, grads.second);
}

template <class T>
Tensor1<T> encode_pair(const HistoryWindow& a, const HistoryWindow& b, const DualGruEncoder<T>& p,
                       const Catalog<T>& cat) {
  require_dims(a.capacity() == b.capacity(), "encoder: windows must share a capacity");
  const HistoryWindow* fa[] = {&a};
  const HistoryWindow* fb[] = {&b};
  auto in = make_encoder_input<T>(cat, fa, fb, static_cast<Index>(a.capacity()));
  return encode(p, in).col(0);
}

// The three behaviour windows of a live session. The high level reads
// (click, order); the low level reads (browse, click).
struct SessionState {
  HistoryWindow browse;
  HistoryWindow click;
  HistoryWindow order;

  SessionState() = default;
  explicit SessionState(std::size_t window)
      : browse(WindowKind::Browse, window), click(WindowKind::Click, window), order(WindowKind::Order, window) {}

  std::size_t window() const { return browse.capacity(); }
  friend bool operator==(const SessionState&, const SessionState&) = default;
};

// Sizes shared by every network in both agents.
struct NetworkShape {
  Index item_dim = 50;      // d
  Index window = 10;        // N
  Index hidden = 32;        // GRU hidden size H
  Index state_dim = 50;     // size of s^h and s^l
  Index critic_hidden = 32; // width of the first evaluation layer
  double bound = 1.0;       // B, bound on goals and actions
};

// s^h from the click and order streams.
template <class T>
Tensor1<T> encode_high(const HistoryWindow& clicks, const HistoryWindow& orders, const DualGruEncoder<T>& p,
                       const Catalog<T>& cat) {
  if (clicks.kind() != WindowKind::Click || orders.kind() != WindowKind::Order)
    throw ParameterError("encode_high expects (click, order) windows");
  return encode_pair(clicks, orders, p, cat);
}

// s^l from the browse and click streams.
template <class T>
Tensor1<T> encode_low(const HistoryWindow& browses, const HistoryWindow& clicks, const DualGruEncoder<T>& p,
                      const Catalog<T>& cat) {
  if (browses.kind() != WindowKind::Browse || clicks.kind() != WindowKind::Click)
    throw ParameterError("encode_low expects (browse, click) windows");
  return encode_pair(browses, clicks, p, cat);
}

}  // namespace hrlmg
