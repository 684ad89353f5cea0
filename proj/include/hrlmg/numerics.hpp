#pragma once

// Dense numerics for the recommendation agents: tensor aliases, parameter
// block plumbing, layer primitives with hand-derived backward passes, a
// finite-difference gradient checker and a small optimizer.
//
// Batched tensors are laid out column-per-sample: an input batch of B
// vectors of size n is an n x B matrix. Biases are stored as n x 1 matrices
// so that every trainable tensor has the same type.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hrlmg/errors.hpp"

namespace hrlmg {

using Index = Eigen::Index;
using Rng = std::mt19937_64;

template <class T>
using Tensor1 = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using Tensor2 = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

inline void require_dims(bool ok, std::string_view what) {
  if (!ok) throw DimensionError(std::string(what));
}

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

template <class T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class Derived>
auto sigmoid_array(const Eigen::ArrayBase<Derived>& a) {
  using T = typename Derived::Scalar;
  return T(1) / (T(1) + (-a).exp());
}

// ---------------------------------------------------------------------------
// Parameter blocks
//
// A parameter block is a plain struct of Tensor2 members that exposes
//   template <class Self, class F> static void visit(Self& self, F&& f);
// calling f(name, tensor) for every member. The same struct type doubles as
// its own gradient container, so shapes always agree.

template <class P, class F>
void for_each_tensor(P& block, F&& f) {
  std::remove_const_t<P>::visit(block, std::forward<F>(f));
}

template <class P, class F>
void visit_prefixed(std::string_view prefix, P& block, F& f) {
  for_each_tensor(block, [&](const std::string& name, auto& m) {
    f(std::string(prefix) + name, m);
  });
}

template <class P>
P zeros_like(const P& block) {
  P out = block;
  for_each_tensor(out, [](const std::string&, auto& m) { m.setZero(); });
  return out;
}

template <class P>
void set_zero(P& block) {
  for_each_tensor(block, [](const std::string&, auto& m) { m.setZero(); });
}

// Calls f(name, a_tensor, b_tensor) for matching members of two blocks.
template <class P, class Q, class F>
void zip_tensors(P& a, Q& b, F&& f) {
  using T = typename std::remove_const_t<P>::Scalar;
  std::vector<std::conditional_t<std::is_const_v<Q>, const Tensor2<T>*, Tensor2<T>*>> other;
  for_each_tensor(b, [&](const std::string&, auto& m) { other.push_back(&m); });
  std::size_t k = 0;
  for_each_tensor(a, [&](const std::string& name, auto& m) {
    auto* o = other.at(k++);
    require_dims(m.rows() == o->rows() && m.cols() == o->cols(),
                 "tensor shape mismatch for " + name);
    f(name, m, *o);
  });
  require_dims(k == other.size(), "parameter blocks differ in tensor count");
}

template <class P>
std::size_t parameter_count(const P& block) {
  std::size_t n = 0;
  for_each_tensor(block, [&](const std::string&, const auto& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <class P>
bool block_finite(const P& block) {
  bool ok = true;
  for_each_tensor(block, [&](const std::string&, const auto& m) { ok = ok && m.allFinite(); });
  return ok;
}

template <class P>
bool bitwise_equal(const P& a, const P& b) {
  bool same = true;
  zip_tensors(a, b, [&](const std::string&, const auto& x, const auto& y) {
    same = same && std::equal(x.data(), x.data() + x.size(), y.data());
  });
  return same;
}

template <class T>
void fill_uniform(Tensor2<T>& m, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
}

// target <- tau * online + (1 - tau) * target, elementwise.
template <class P>
void soft_update(P& target, const P& online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ParameterError("soft_update: tau must lie in [0, 1]");
  using T = typename P::Scalar;
  const T t = static_cast<T>(tau);
  const T keep = static_cast<T>(1.0 - tau);
  zip_tensors(target, online, [&](const std::string&, auto& tgt, const auto& src) {
    tgt = t * src + keep * tgt;
  });
}

// ---------------------------------------------------------------------------
// Linear layer: y = W x + b

template <class T>
struct Linear {
  using Scalar = T;
  Tensor2<T> W;
  Tensor2<T> b;

  Linear() = default;
  Linear(Index out, Index in) : W(Tensor2<T>::Zero(out, in)), b(Tensor2<T>::Zero(out, 1)) {}

  Index in_size() const { return W.cols(); }
  Index out_size() const { return W.rows(); }

  template <class Self, class F>
  static void visit(Self& s, F&& f) {
    f("W", s.W);
    f("b", s.b);
  }
};

template <class T>
Tensor2<T> linear_forward(const Linear<T>& p, const Tensor2<T>& x) {
  require_dims(p.b.rows() == p.W.rows() && p.b.cols() == 1, "linear: bias shape");
  require_dims(x.rows() == p.W.cols(), "linear: input size " + std::to_string(x.rows()) +
                                           " != weight columns " + std::to_string(p.W.cols()));
  Tensor2<T> y = p.W * x;
  y.colwise() += p.b.col(0);
  return y;
}

template <class T>
Tensor1<T> linear(const Tensor1<T>& x, const Tensor2<T>& W, const Tensor1<T>& b) {
  require_dims(x.size() == W.cols() && b.size() == W.rows(), "linear: shape mismatch");
  return W * x + b;
}

// Accumulates dW, db into grads (when given) and returns dL/dx.
template <class T>
Tensor2<T> linear_backward(const Linear<T>& p, const Tensor2<T>& x, const Tensor2<T>& dy,
                           Linear<T>* grads) {
  require_dims(dy.rows() == p.W.rows() && dy.cols() == x.cols(), "linear_backward: gradient shape");
  if (grads) {
    grads->W.noalias() += dy * x.transpose();
    grads->b += dy.rowwise().sum();
  }
  return p.W.transpose() * dy;
}

// ---------------------------------------------------------------------------
// GRU cell
//
//   z  = sigmoid(Wz x + Uz h + bz)
//   r  = sigmoid(Wr x + Ur h + br)
//   n  = tanh(Wn x + Un (r * h) + bn)
//   h' = (1 - z) * h + z * n

template <class T>
struct GruCell {
  using Scalar = T;
  Tensor2<T> Wz, Uz, bz;
  Tensor2<T> Wr, Ur, br;
  Tensor2<T> Wn, Un, bn;

  GruCell() = default;
  GruCell(Index hidden, Index input)
      : Wz(Tensor2<T>::Zero(hidden, input)), Uz(Tensor2<T>::Zero(hidden, hidden)), bz(Tensor2<T>::Zero(hidden, 1)),
        Wr(Tensor2<T>::Zero(hidden, input)), Ur(Tensor2<T>::Zero(hidden, hidden)), br(Tensor2<T>::Zero(hidden, 1)),
        Wn(Tensor2<T>::Zero(hidden, input)), Un(Tensor2<T>::Zero(hidden, hidden)), bn(Tensor2<T>::Zero(hidden, 1)) {}

  Index hidden_size() const { return Wz.rows(); }
  Index input_size() const { return Wz.cols(); }

  void validate() const {
    const Index h = hidden_size(), d = input_size();
    auto ok = [&](const Tensor2<T>& m, Index r, Index c) { return m.rows() == r && m.cols() == c; };
    require_dims(ok(Wz, h, d) && ok(Wr, h, d) && ok(Wn, h, d), "gru: input weights must be H x d");
    require_dims(ok(Uz, h, h) && ok(Ur, h, h) && ok(Un, h, h), "gru: recurrent weights must be H x H");
    require_dims(ok(bz, h, 1) && ok(br, h, 1) && ok(bn, h, 1), "gru: biases must be H x 1");
  }

  void init_uniform(Rng& rng) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(hidden_size(), 1)));
    visit(*this, [&](const std::string&, Tensor2<T>& m) { fill_uniform(m, limit, rng); });
  }

  template <class Self, class F>
  static void visit(Self& s, F&& f) {
    f("Wz", s.Wz); f("Uz", s.Uz); f("bz", s.bz);
    f("Wr", s.Wr); f("Ur", s.Ur); f("br", s.br);
    f("Wn", s.Wn); f("Un", s.Un); f("bn", s.bn);
  }
};

template <class T>
struct GruStepCache {
  Tensor2<T> x, h_prev, z, r, n;
};

// Single step over a batch (columns are samples).
template <class T>
Tensor2<T> gru_step(const GruCell<T>& p, const Tensor2<T>& x, const Tensor2<T>& h_prev,
                    GruStepCache<T>* cache = nullptr) {
  p.validate();
  require_dims(x.rows() == p.input_size(), "gru_step: input size does not match the cell");
  require_dims(h_prev.rows() == p.hidden_size() && h_prev.cols() == x.cols(),
               "gru_step: hidden state shape does not match the cell");
  Tensor2<T> az = p.Wz * x + p.Uz * h_prev;
  az.colwise() += p.bz.col(0);
  Tensor2<T> ar = p.Wr * x + p.Ur * h_prev;
  ar.colwise() += p.br.col(0);
  Tensor2<T> z = sigmoid_array(az.array()).matrix();
  Tensor2<T> r = sigmoid_array(ar.array()).matrix();
  Tensor2<T> rh = (r.array() * h_prev.array()).matrix();
  Tensor2<T> an = p.Wn * x + p.Un * rh;
  an.colwise() += p.bn.col(0);
  Tensor2<T> n = an.array().tanh().matrix();
  Tensor2<T> h = ((T(1) - z.array()) * h_prev.array() + z.array() * n.array()).matrix();
  if (cache) *cache = GruStepCache<T>{x, h_prev, std::move(z), std::move(r), std::move(n)};
  return h;
}

template <class T>
Tensor1<T> gru_step(const Tensor1<T>& x, const Tensor1<T>& h_prev, const GruCell<T>& p) {
  Tensor2<T> xm = x;
  Tensor2<T> hm = h_prev;
  return gru_step(p, xm, hm).col(0);
}

template <class T>
struct GruStepGrads {
  Tensor2<T> dx, dh_prev;
};

template <class T>
GruStepGrads<T> gru_step_backward(const GruCell<T>& p, const GruStepCache<T>& c, const Tensor2<T>& dh,
                                  GruCell<T>* grads) {
  const auto z = c.z.array();
  const auto r = c.r.array();
  const auto n = c.n.array();
  const auto hp = c.h_prev.array();
  Tensor2<T> dz = (dh.array() * (n - hp)).matrix();
  Tensor2<T> dan = (dh.array() * z * (T(1) - n * n)).matrix();
  Tensor2<T> dh_prev = (dh.array() * (T(1) - z)).matrix();
  Tensor2<T> drh = p.Un.transpose() * dan;
  Tensor2<T> dar = (drh.array() * hp * r * (T(1) - r)).matrix();
  dh_prev.array() += drh.array() * r;
  Tensor2<T> daz = (dz.array() * z * (T(1) - z)).matrix();
  dh_prev.noalias() += p.Uz.transpose() * daz + p.Ur.transpose() * dar;
  Tensor2<T> dx = p.Wz.transpose() * daz + p.Wr.transpose() * dar + p.Wn.transpose() * dan;
  if (grads) {
    Tensor2<T> rh = (r * hp).matrix();
    grads->Wz.noalias() += daz * c.x.transpose();
    grads->Uz.noalias() += daz * c.h_prev.transpose();
    grads->bz += daz.rowwise().sum();
    grads->Wr.noalias() += dar * c.x.transpose();
    grads->Ur.noalias() += dar * c.h_prev.transpose();
    grads->br += dar.rowwise().sum();
    grads->Wn.noalias() += dan * c.x.transpose();
    grads->Un.noalias() += dan * rh.transpose();
    grads->bn += dan.rowwise().sum();
  }
  return {std::move(dx), std::move(dh_prev)};
}

// Unrolled GRU over a fixed number of steps starting from h = 0.
// x holds the inputs time-major: columns [t*B, (t+1)*B) are step t.
template <class T>
struct GruSequenceCache {
  Index steps = 0;
  Index batch = 0;
  Tensor2<T> x;        // d x (steps*B)
  Tensor2<T> h;        // H x ((steps+1)*B), h_0 .. h_steps
  Tensor2<T> z, r, n;  // H x (steps*B)
};

template <class T>
Tensor2<T> gru_sequence(const GruCell<T>& p, const Tensor2<T>& x, Index steps, GruSequenceCache<T>& c) {
  p.validate();
  require_dims(steps > 0 && x.cols() % steps == 0, "gru_sequence: columns must be a multiple of the step count");
  require_dims(x.rows() == p.input_size(), "gru_sequence: input size does not match the cell");
  const Index H = p.hidden_size();
  const Index B = x.cols() / steps;
  c.steps = steps;
  c.batch = B;
  c.x = x;
  Tensor2<T> xz = p.Wz * x;
  xz.colwise() += p.bz.col(0);
  Tensor2<T> xr = p.Wr * x;
  xr.colwise() += p.br.col(0);
  Tensor2<T> xn = p.Wn * x;
  xn.colwise() += p.bn.col(0);
  c.h.setZero(H, (steps + 1) * B);
  c.z.resize(H, steps * B);
  c.r.resize(H, steps * B);
  c.n.resize(H, steps * B);
  Tensor2<T> tmp(H, B);
  for (Index t = 0; t < steps; ++t) {
    const auto hp = c.h.middleCols(t * B, B);
    tmp.noalias() = p.Uz * hp;
    c.z.middleCols(t * B, B) = sigmoid_array((xz.middleCols(t * B, B) + tmp).array()).matrix();
    tmp.noalias() = p.Ur * hp;
    c.r.middleCols(t * B, B) = sigmoid_array((xr.middleCols(t * B, B) + tmp).array()).matrix();
    Tensor2<T> rh = (c.r.middleCols(t * B, B).array() * hp.array()).matrix();
    tmp.noalias() = p.Un * rh;
    c.n.middleCols(t * B, B) = (xn.middleCols(t * B, B) + tmp).array().tanh().matrix();
    const auto z = c.z.middleCols(t * B, B).array();
    c.h.middleCols((t + 1) * B, B) = ((T(1) - z) * hp.array() + z * c.n.middleCols(t * B, B).array()).matrix();
  }
  return c.h.middleCols(steps * B, B);
}

template <class T>
Tensor2<T> gru_sequence(const GruCell<T>& p, const Tensor2<T>& x, Index steps) {
  GruSequenceCache<T> c;
  return gru_sequence(p, x, steps, c);
}

// Backpropagation through time from dL/dh_final. Parameter gradients are
// accumulated into grads.
template <class T>
void gru_sequence_backward(const GruCell<T>& p, const GruSequenceCache<T>& c, const Tensor2<T>& dh_final,
                           GruCell<T>& grads) {
  const Index H = p.hidden_size();
  const Index B = c.batch;
  const Index steps = c.steps;
  require_dims(dh_final.rows() == H && dh_final.cols() == B, "gru_sequence_backward: gradient shape");
  Tensor2<T> daz(H, steps * B), dar(H, steps * B), dan(H, steps * B);
  Tensor2<T> dh = dh_final;
  Tensor2<T> drh(H, B);
  for (Index t = steps - 1; t >= 0; --t) {
    const auto hp = c.h.middleCols(t * B, B).array();
    const auto z = c.z.middleCols(t * B, B).array();
    const auto r = c.r.middleCols(t * B, B).array();
    const auto n = c.n.middleCols(t * B, B).array();
    auto dan_t = dan.middleCols(t * B, B);
    auto daz_t = daz.middleCols(t * B, B);
    auto dar_t = dar.middleCols(t * B, B);
    dan_t = (dh.array() * z * (T(1) - n * n)).matrix();
    daz_t = (dh.array() * (n - hp) * z * (T(1) - z)).matrix();
    drh.noalias() = p.Un.transpose() * dan_t;
    dar_t = (drh.array() * hp * r * (T(1) - r)).matrix();
    Tensor2<T> dh_prev = (dh.array() * (T(1) - z) + drh.array() * r).matrix();
    dh_prev.noalias() += p.Uz.transpose() * daz_t;
    dh_prev.noalias() += p.Ur.transpose() * dar_t;
    dh = std::move(dh_prev);
  }
  const auto h_prev = c.h.leftCols(steps * B);
  grads.Wz.noalias() += daz * c.x.transpose();
  grads.Uz.noalias() += daz * h_prev.transpose();
  grads.bz += daz.rowwise().sum();
  grads.Wr.noalias() += dar * c.x.transpose();
  grads.Ur.noalias() += dar * h_prev.transpose();
  grads.br += dar.rowwise().sum();
  Tensor2<T> rh = (c.r.array() * h_prev.array()).matrix();
  grads.Wn.noalias() += dan * c.x.transpose();
  grads.Un.noalias() += dan * rh.transpose();
  grads.bn += dan.rowwise().sum();
}

// ---------------------------------------------------------------------------
// Cosine similarity

template <class T>
T cosine(const Tensor1<T>& u, const Tensor1<T>& v) {
  require_dims(u.size() == v.size(), "cosine: vectors differ in length");
  const T nu = u.norm();
  const T nv = v.norm();
  if (!(nu > T(0)) || !(nv > T(0))) throw DegenerateVectorError("cosine: zero-norm vector");
  return std::clamp(u.dot(v) / (nu * nv), T(-1), T(1));
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

// Relative error with an absolute floor on the denominator, so coordinates
// whose true gradient is ~0 are compared absolutely.
template <class T>
T relative_error(T analytic, T numeric, T floor = T(1e-6)) {
  const T denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Compares analytic gradients to central differences over every coordinate of
// every tensor. f evaluates the scalar objective at the current values.
template <class T, class Fn>
T grad_check(Fn&& f, std::span<Tensor2<T>* const> params, std::span<const Tensor2<T>* const> analytic, T eps) {
  if (!(eps > T(0) && eps <= T(1e-2))) throw ParameterError("grad_check: eps must lie in (0, 1e-2]");
  require_dims(params.size() == analytic.size(), "grad_check: parameter/gradient count mismatch");
  auto eval = [&]() {
    const T v = f();
    if (!std::isfinite(static_cast<double>(v))) throw NumericError("grad_check: objective is not finite");
    return v;
  };
  eval();
  T worst = T(0);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor2<T>& theta = *params[k];
    const Tensor2<T>& g = *analytic[k];
    require_dims(theta.rows() == g.rows() && theta.cols() == g.cols(), "grad_check: gradient shape mismatch");
    for (Index i = 0; i < theta.size(); ++i) {
      const T saved = theta.data()[i];
      theta.data()[i] = saved + eps;
      const T up = eval();
      theta.data()[i] = saved - eps;
      const T down = eval();
      theta.data()[i] = saved;
      const T numeric = (up - down) / (T(2) * eps);
      worst = std::max(worst, relative_error(g.data()[i], numeric));
    }
  }
  return worst;
}

// Block form: analytic must be the gradient block matching params.
template <class P, class Fn>
typename P::Scalar grad_check(Fn&& f, P& params, const P& analytic, typename P::Scalar eps) {
  using T = typename P::Scalar;
  std::vector<Tensor2<T>*> ps;
  std::vector<const Tensor2<T>*> gs;
  zip_tensors(params, analytic, [&](const std::string&, Tensor2<T>& p, const Tensor2<T>& g) {
    ps.push_back(&p);
    gs.push_back(&g);
  });
  return grad_check<T>(std::forward<Fn>(f), std::span<Tensor2<T>* const>(ps), std::span<const Tensor2<T>* const>(gs),
                       eps);
}

// ---------------------------------------------------------------------------
// Optimizer

enum class OptimizerKind { Sgd, Adam };

template <class T>
struct Binding {
  std::string name;
  Tensor2<T>* value;
  const Tensor2<T>* grad;
};

template <class P>
void bind_params(std::string_view prefix, P& params, const P& grads, std::vector<Binding<typename P::Scalar>>& out) {
  zip_tensors(params, grads, [&](const std::string& name, auto& v, const auto& g) {
    out.push_back({std::string(prefix) + name, &v, &g});
  });
}

template <class T>
T gradient_norm(const std::vector<Binding<T>>& bindings) {
  T sq = T(0);
  for (const auto& b : bindings) sq += b.grad->squaredNorm();
  return std::sqrt(sq);
}

// Plain SGD (theta <- theta - lr * g) or Adam behind one interface. Every
// application is counted per tensor name.
template <class T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerKind kind = OptimizerKind::Sgd, double beta1 = 0.9, double beta2 = 0.999,
                     double epsilon = 1e-8)
      : kind_(kind), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  OptimizerKind kind() const { return kind_; }

  void step(const std::vector<Binding<T>>& bindings, double lr) {
    if (!(lr > 0.0)) throw ParameterError("optimizer: learning rate must be positive");
    for (const auto& b : bindings) {
      require_dims(b.value->rows() == b.grad->rows() && b.value->cols() == b.grad->cols(),
                   "optimizer: gradient shape mismatch for " + b.name);
      const std::uint64_t t = ++counts_[b.name];
      if (kind_ == OptimizerKind::Sgd) {
        *b.value -= static_cast<T>(lr) * *b.grad;
        continue;
      }
      auto& st = moments_[b.name];
      if (st.m.size() == 0) {
        st.m = Tensor2<T>::Zero(b.grad->rows(), b.grad->cols());
        st.v = Tensor2<T>::Zero(b.grad->rows(), b.grad->cols());
      }
      const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
      st.m = b1 * st.m + (T(1) - b1) * *b.grad;
      st.v = b2 * st.v + (T(1) - b2) * b.grad->cwiseAbs2();
      const T c1 = static_cast<T>(1.0 - std::pow(beta1_, static_cast<double>(t)));
      const T c2 = static_cast<T>(1.0 - std::pow(beta2_, static_cast<double>(t)));
      const T step = static_cast<T>(lr) / c1;
      b.value->array() -= step * st.m.array() / ((st.v.array() / c2).sqrt() + static_cast<T>(epsilon_));
    }
  }

  std::uint64_t applications(const std::string& name) const {
    auto it = counts_.find(name);
    return it == counts_.end() ? 0 : it->second;
  }
  const std::map<std::string, std::uint64_t>& application_counts() const { return counts_; }

 private:
  struct Moments {
    Tensor2<T> m, v;
  };
  OptimizerKind kind_;
  double beta1_, beta2_, epsilon_;
  std::map<std::string, std::uint64_t> counts_;
  std::map<std::string, Moments> moments_;
};

// theta <- theta - lr * g over a whole block.
template <class P>
void optimizer_step(P& params, const P& grads, double lr) {
  if (!(lr > 0.0)) throw ParameterError("optimizer: learning rate must be positive");
  using T = typename P::Scalar;
  zip_tensors(params, grads, [&](const std::string&, auto& v, const auto& g) { v -= static_cast<T>(lr) * g; });
}

}  // namespace hrlmg
