#pragma once

// Output heads placed behind the state encoders.

#include "hrlmg/numerics.hpp"

namespace hrlmg {

// y = B * tanh(W s + b); used for goal generation and action generation.
template <class T>
struct BoundedHead {
  using Scalar = T;
  Tensor2<T> W;  // out x S
  Tensor2<T> b;  // out x 1

  BoundedHead() = default;
  BoundedHead(Index out, Index state) : W(Tensor2<T>::Zero(out, state)), b(Tensor2<T>::Zero(out, 1)) {}

  Index out_size() const { return W.rows(); }
  Index state_size() const { return W.cols(); }

  void init_uniform(Rng& rng, double final_limit = 3e-3) {
    fill_uniform(W, final_limit, rng);
    fill_uniform(b, final_limit, rng);
  }

  template <class Self, class F>
  static void visit(Self& s, F&& f) {
    f("W", s.W);
    f("b", s.b);
  }
};

template <class T>
struct BoundedHeadCache {
  Tensor2<T> s;
  Tensor2<T> t;  // tanh(W s + b)
};

template <class T>
Tensor2<T> bounded_forward(const BoundedHead<T>& p, const Tensor2<T>& s, T bound, BoundedHeadCache<T>* cache = nullptr) {
  require_dims(s.rows() == p.state_size(), "bounded head: state size mismatch");
  Tensor2<T> pre = p.W * s;
  pre.colwise() += p.b.col(0);
  Tensor2<T> t = pre.array().tanh().matrix();
  Tensor2<T> y = bound * t;
  if (cache) *cache = BoundedHeadCache<T>{s, std::move(t)};
  return y;
}

// Returns dL/ds; accumulates parameter gradients when grads is given.
template <class T>
Tensor2<T> bounded_backward(const BoundedHead<T>& p, const BoundedHeadCache<T>& c, T bound, const Tensor2<T>& dy,
                            BoundedHead<T>* grads) {
  const Tensor2<T> dpre = (dy.array() * bound * (T(1) - c.t.array() * c.t.array())).matrix();
  if (grads) {
    grads->W.noalias() += dpre * c.s.transpose();
    grads->b += dpre.rowwise().sum();
  }
  return p.W.transpose() * dpre;
}

// Two-layer evaluation head over a (state, input) pair:
//   q_hat = relu(W_s s + W_x x + b_1)
//   q     = relu(w_q q_hat + b_q)
template <class T>
struct EvalHead {
  using Scalar = T;
  Tensor2<T> Ws;  // K x S
  Tensor2<T> Wx;  // K x d
  Tensor2<T> b1;  // K x 1
  Tensor2<T> wq;  // 1 x K
  Tensor2<T> bq;  // 1 x 1

  EvalHead() = default;
  EvalHead(Index hidden, Index state, Index input)
      : Ws(Tensor2<T>::Zero(hidden, state)), Wx(Tensor2<T>::Zero(hidden, input)), b1(Tensor2<T>::Zero(hidden, 1)),
        wq(Tensor2<T>::Zero(1, hidden)), bq(Tensor2<T>::Zero(1, 1)) {}

  Index hidden_size() const { return Ws.rows(); }
  Index state_size() const { return Ws.cols(); }
  Index input_size() const { return Wx.cols(); }

  // Output bias starts positive so the final relu is live at initialisation.
  void init_uniform(Rng& rng, double output_bias = 0.1, double final_limit = 3e-3) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(state_size() + input_size()));
    fill_uniform(Ws, limit, rng);
    fill_uniform(Wx, limit, rng);
    fill_uniform(b1, limit, rng);
    fill_uniform(wq, final_limit, rng);
    bq.setConstant(static_cast<T>(output_bias));
  }

  template <class Self, class F>
  static void visit(Self& s, F&& f) {
    f("Ws", s.Ws);
    f("Wx", s.Wx);
    f("b1", s.b1);
    f("wq", s.wq);
    f("bq", s.bq);
  }
};

template <class T>
struct EvalHeadCache {
  Tensor2<T> s, x;
  Tensor2<T> pre1, hidden, pre2;
};

template <class T>
Tensor2<T> eval_forward(const EvalHead<T>& p, const Tensor2<T>& s, const Tensor2<T>& x, EvalHeadCache<T>* cache = nullptr) {
  require_dims(s.rows() == p.state_size(), "eval head: state size mismatch");
  require_dims(x.rows() == p.input_size(), "eval head: input size mismatch");
  require_dims(s.cols() == x.cols(), "eval head: batch size mismatch");
  Tensor2<T> pre1 = p.Ws * s;
  pre1.noalias() += p.Wx * x;
  pre1.colwise() += p.b1.col(0);
  Tensor2<T> hidden = pre1.cwiseMax(T(0));
  Tensor2<T> pre2 = p.wq * hidden;
  pre2.array() += p.bq(0, 0);
  Tensor2<T> q = pre2.cwiseMax(T(0));
  if (cache) *cache = EvalHeadCache<T>{s, x, std::move(pre1), std::move(hidden), std::move(pre2)};
  return q;
}

template <class T>
struct EvalHeadInputGrads {
  Tensor2<T> ds;
  Tensor2<T> dx;
};

template <class T>
EvalHeadInputGrads<T> eval_backward(const EvalHead<T>& p, const EvalHeadCache<T>& c, const Tensor2<T>& dq,
                                    EvalHead<T>* grads, bool need_ds = true) {
  const Tensor2<T> dpre2 = (dq.array() * (c.pre2.array() > T(0)).template cast<T>()).matrix();
  const Tensor2<T> dhidden = p.wq.transpose() * dpre2;
  const Tensor2<T> dpre1 = (dhidden.array() * (c.pre1.array() > T(0)).template cast<T>()).matrix();
  if (grads) {
    grads->wq.noalias() += dpre2 * c.hidden.transpose();
    grads->bq(0, 0) += dpre2.sum();
    grads->Ws.noalias() += dpre1 * c.s.transpose();
    grads->Wx.noalias() += dpre1 * c.x.transpose();
    grads->b1 += dpre1.rowwise().sum();
  }
  EvalHeadInputGrads<T> out;
  if (need_ds) out.ds = p.Ws.transpose() * dpre1;
  out.dx = p.Wx.transpose() * dpre1;
  return out;
}

// Column-wise unit direction u = a / |a|. Zero columns stay zero.
template <class T>
Tensor2<T> direction_forward(const Tensor2<T>& a) {
  Tensor2<T> u = a;
  for (Index j = 0; j < a.cols(); ++j) {
    const T n = a.col(j).norm();
    if (n > T(0)) u.col(j) /= n;
  }
  return u;
}

// dL/da = (du - u (u . du)) / |a|, zero for zero columns.
template <class T>
Tensor2<T> direction_backward(const Tensor2<T>& a, const Tensor2<T>& u, const Tensor2<T>& du) {
  Tensor2<T> da = Tensor2<T>::Zero(a.rows(), a.cols());
  for (Index j = 0; j < a.cols(); ++j) {
    const T n = a.col(j).norm();
    if (n > T(0)) da.col(j) = (du.col(j) - u.col(j) * u.col(j).dot(du.col(j))) / n;
  }
  return da;
}

}  // namespace hrlmg
