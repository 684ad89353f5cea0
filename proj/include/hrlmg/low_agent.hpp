#pragma once

// Low-level recommendation agent: an actor producing a virtual item
// embedding from s^l and a critic scoring (s^l, executed item) pairs. Goals
// from the high level reach this agent only through the internal reward.

#include <optional>
#include <span>
#include <vector>

#include "hrlmg/catalog.hpp"
#include "hrlmg/encoders.hpp"
#include "hrlmg/heads.hpp"
#include "hrlmg/numerics.hpp"

namespace hrlmg {

// Stage owning a step of the period. `step` is zero-based in [0, c); each of
// the M stages spans floor(c/M) steps and any leftover steps belong to the
// last stage. Returns the zero-based stage index.
inline int stage_goal(int step, int period, int goals) {
  if (goals < 1 || period < goals) throw ParameterError("stage_goal: need period >= goals >= 1");
  if (step < 0 || step >= period) throw ParameterError("stage_goal: step " + std::to_string(step) + " outside [0, c)");
  const int stage_len = period / goals;
  return std::min(step / stage_len, goals - 1);
}

// Cosine between the executed item and the goal active at `step`. A
// zero-norm goal yields 0.
template <class T>
T internal_reward(const Tensor2<T>& goals, const Tensor1<T>& action, int step, int period) {
  const int goal_count = static_cast<int>(goals.cols());
  const int j = stage_goal(step, period, goal_count);
  require_dims(goals.rows() == action.size(), "internal_reward: goal and action sizes differ");
  const Tensor1<T> g = goals.col(j);
  if (!(g.norm() > T(0))) return T(0);
  return cosine<T>(action, g);
}

template <class T>
T total_reward(T external, T internal, double alpha) {
  if (!(alpha >= 0.0)) throw ParameterError("total_reward: alpha must be non-negative");
  return external + static_cast<T>(alpha) * internal;
}

template <class T>
struct LowActor {
  using Scalar = T;
  DualGruEncoder<T> enc;
  BoundedHead<T> head;

  LowActor() = default;
  explicit LowActor(const NetworkShape& s)
      : enc(s.item_dim, s.hidden, s.state_dim), head(s.item_dim, s.state_dim) {}

  template <class Self, class F>
  static void visit(Self& s, F&& f) {
    visit_prefixed("enc.", s.enc, f);
    visit_prefixed("head.", s.head, f);
  }
};

template <class T>
struct LowCritic {
  using Scalar = T;
  DualGruEncoder<T> enc;
  EvalHead<T> head;

  LowCritic() = default;
  explicit LowCritic(const NetworkShape& s)
      : enc(s.item_dim, s.hidden, s.state_dim), head(s.critic_hidden, s.state_dim, s.item_dim) {}

  template <class Self, class F>
  static void visit(Self& s, F&& f) {
    visit_prefixed("enc.", s.enc, f);
    visit_prefixed("head.", s.head, f);
  }
};

template <class T>
struct LowParams {
  using Scalar = T;
  LowActor<T> actor, actor_target;
  LowCritic<T> critic, critic_target;

  template <class Self, class F>
  static void visit(Self& s, F&& f) {
    visit_prefixed("actor.", s.actor, f);
    visit_prefixed("actor_target.", s.actor_target, f);
    visit_prefixed("critic.", s.critic, f);
    visit_prefixed("critic_target.", s.critic_target, f);
  }
};

template <class T>
struct LowTransition {
  HistoryWindow browse, click;  // s^l
  Tensor2<T> goals;             // d x M, empty when no high level is attached
  ItemId action = kNoItem;      // executed (mapped) item
  T reward = T(0);              // r^ex
  HistoryWindow next_browse, next_click;
  int step = 0;                 // position within the goal period, zero-based
  bool terminal = false;
};

struct LowAgentConfig {
  NetworkShape shape;
  double gamma = 0.95;
  double alpha = 0.5;
  int period = 10;  // c
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double critic_output_bias = 0.1;
  // Critic sees only the direction of its action or goal input.
  bool direction_input = true;
  // Bootstrap target evaluated at the catalog item nearest to the target
  // actor's output instead of the raw virtual action.
  bool mapped_target = false;
};

// Embedding of the catalog item with the highest cosine to each column,
// ties to the lowest id. Ignores within-session exclusion.
template <class T>
Tensor2<T> nearest_items(const Catalog<T>& cat, const Tensor2<T>& a) {
  const Tensor2<T> scores = cat.unit_norms().transpose() * a;
  Tensor2<T> out(cat.dim(), a.cols());
  for (Index j = 0; j < a.cols(); ++j) {
    Index best = 0;
    scores.col(j).maxCoeff(&best);
    out.col(j) = cat.embeddings().col(best);
  }
  return out;
}

// Clamps every coordinate into the open interval (-bound, bound).
template <class T>
void clamp_open(Tensor2<T>& m, T bound) {
  const T lim = std::nextafter(bound, T(0));
  m = m.cwiseMax(-lim).cwiseMin(lim);
}

template <class T>
void add_noise(Tensor2<T>& m, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw ParameterError("exploration noise sigma must be non-negative");
  if (sigma == 0.0) return;
  std::normal_distribution<double> normal(0.0, sigma);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] += static_cast<T>(normal(rng));
}

// Deterministic-policy ascent: backpropagates dQ/da (as returned by
// action_grad for the actor's own outputs) through the actor and applies
// one optimizer step. Returns the norm of the applied gradient.
template <class T, class ActionGrad>
T actor_ascent_step(LowActor<T>& actor, Optimizer<T>& opt, const EncoderInput<T>& in, T bound, double lr,
                    ActionGrad&& action_grad, Tensor2<T>* virtual_actions = nullptr) {
  EncoderCache<T> cache;
  const Tensor2<T> s = encode(actor.enc, in, cache);
  BoundedHeadCache<T> hc;
  const Tensor2<T> a_hat = bounded_forward(actor.head, s, bound, &hc);
  if (virtual_actions) *virtual_actions = a_hat;
  const T inv_b = T(1) / static_cast<T>(in.batch);
  // Minimise -mean Q.
  const Tensor2<T> da = -inv_b * action_grad(a_hat);
  LowActor<T> grads = zeros_like(actor);
  const Tensor2<T> ds = bounded_backward(actor.head, hc, bound, da, &grads.head);
  encode_backward(actor.enc, cache, ds, grads.enc);
  std::vector<Binding<T>> bindings;
  bind_params("actor.", actor, grads, bindings);
  opt.step(bindings, lr);
  return gradient_norm(bindings);
}

template <class T>
class LowAgent {
 public:
  LowAgent(const LowAgentConfig& cfg, const Catalog<T>& catalog, Rng& init_rng)
      : cfg_(cfg), catalog_(&catalog), actor_opt_(cfg.optimizer), critic_opt_(cfg.optimizer) {
    require_dims(catalog.dim() == cfg.shape.item_dim, "low agent: catalog dimension != item_dim");
    p_.actor = LowActor<T>(cfg.shape);
    p_.critic = LowCritic<T>(cfg.shape);
    p_.actor.enc.init_uniform(init_rng);
    p_.actor.head.init_uniform(init_rng);
    p_.critic.enc.init_uniform(init_rng);
    p_.critic.head.init_uniform(init_rng, cfg.critic_output_bias);
    p_.actor_target = p_.actor;
    p_.critic_target = p_.critic;
  }

  const LowAgentConfig& config() const { return cfg_; }
  LowParams<T>& params() { return p_; }
  const LowParams<T>& params() const { return p_; }
  const Catalog<T>& catalog() const { return *catalog_; }
  Optimizer<T>& actor_optimizer() { return actor_opt_; }
  Optimizer<T>& critic_optimizer() { return critic_opt_; }
  T bound() const { return static_cast<T>(cfg_.shape.bound); }

  // Virtual action a_hat = B tanh(W_a s^l + b_a) plus optional Gaussian
  // exploration noise, clamped into (-B, B).
  Tensor1<T> generate_action(const HistoryWindow& browse, const HistoryWindow& click, double noise_sigma,
                             Rng* noise_rng = nullptr) const {
    const Tensor2<T> s = encode_low(browse, click, p_.actor.enc, *catalog_);
    Tensor2<T> a = bounded_forward(p_.actor.head, s, bound());
    if (noise_sigma > 0.0) {
      if (!noise_rng) throw ParameterError("generate_action: noise requested without a generator");
      add_noise(a, noise_sigma, *noise_rng);
    } else if (noise_sigma < 0.0) {
      throw ParameterError("exploration noise sigma must be non-negative");
    }
    clamp_open(a, bound());
    return a.col(0);
  }

  T evaluate_action(const HistoryWindow& browse, const HistoryWindow& click, const Tensor1<T>& a) const {
    const Tensor2<T> s = encode_low(browse, click, p_.critic.enc, *catalog_);
    const Tensor2<T> x = a;
    return eval_forward(p_.critic.head, s, critic_input(x))(0, 0);
  }

  struct Batch {
    EncoderInput<T> now, next;
    Tensor2<T> actions;  // d x B, executed items
    Tensor1<T> reward;   // r^low, recomputed from the stored fields
    Tensor1<T> alive;    // 0 for terminal transitions
  };

  Batch prepare(std::span<const LowTransition<T>* const> batch) const {
    if (batch.empty()) throw ParameterError("low agent update: empty batch");
    const Index B = static_cast<Index>(batch.size());
    std::vector<const HistoryWindow*> b0, c0, b1, c1;
    Batch out;
    out.actions.resize(cfg_.shape.item_dim, B);
    out.reward.resize(B);
    out.alive.resize(B);
    for (Index k = 0; k < B; ++k) {
      const auto& tr = *batch[static_cast<std::size_t>(k)];
      b0.push_back(&tr.browse);
      c0.push_back(&tr.click);
      b1.push_back(&tr.next_browse);
      c1.push_back(&tr.next_click);
      out.actions.col(k) = catalog_->embedding(tr.action);
      T r_in = T(0);
      if (tr.goals.cols() > 0) r_in = internal_reward<T>(tr.goals, out.actions.col(k), tr.step, cfg_.period);
      out.reward[k] = total_reward(tr.reward, r_in, cfg_.alpha);
      out.alive[k] = tr.terminal ? T(0) : T(1);
    }
    const Index N = cfg_.shape.window;
    out.now = make_encoder_input<T>(*catalog_, b0, c0, N);
    out.next = make_encoder_input<T>(*catalog_, b1, c1, N);
    return out;
  }

  // One step on mean (y - Q(s, a))^2 with y = r^low + gamma Q'(s', mu'(s')).
  // Returns the loss before the step.
  T critic_update(const Batch& b) {
    const T bound_t = bound();
    const Tensor2<T> s_next_a = encode(p_.actor_target.enc, b.next);
    Tensor2<T> a_next = bounded_forward(p_.actor_target.head, s_next_a, bound_t);
    if (cfg_.mapped_target) a_next = nearest_items(*catalog_, a_next);
    const Tensor2<T> s_next_c = encode(p_.critic_target.enc, b.next);
    const Tensor2<T> q_next = eval_forward(p_.critic_target.head, s_next_c, critic_input(a_next));
    const T gamma = static_cast<T>(cfg_.gamma);
    const Tensor1<T> y = b.reward + gamma * b.alive.cwiseProduct(q_next.row(0).transpose());

    EncoderCache<T> cache;
    const Tensor2<T> s = encode(p_.critic.enc, b.now, cache);
    EvalHeadCache<T> hc;
    const Tensor2<T> q = eval_forward(p_.critic.head, s, critic_input(b.actions), &hc);
    if (probe_) probe_->critic_actions = b.actions;
    const Tensor1<T> delta = q.row(0).transpose() - y;
    const T n = static_cast<T>(b.actions.cols());
    const T loss = delta.squaredNorm() / n;
    const Tensor2<T> dq = (T(2) / n) * delta.transpose();
    LowCritic<T> grads = zeros_like(p_.critic);
    const auto dins = eval_backward(p_.critic.head, hc, dq, &grads.head);
    encode_backward(p_.critic.enc, cache, dins.ds, grads.enc);
    std::vector<Binding<T>> bindings;
    bind_params("critic.", p_.critic, grads, bindings);
    critic_opt_.step(bindings, cfg_.critic_lr);
    last_q_mean_ = q.mean();
    return loss;
  }

  // Policy gradient taken at the actor's own virtual output.
  T actor_update(const Batch& b) {
    const Tensor2<T> s_c = encode(p_.critic.enc, b.now);
    auto dq_da = [&](const Tensor2<T>& a_hat) {
      EvalHeadCache<T> hc;
      const Tensor2<T> x = critic_input(a_hat);
      const Tensor2<T> q = eval_forward(p_.critic.head, s_c, x, &hc);
      const Tensor2<T> ones = Tensor2<T>::Ones(1, q.cols());
      const Tensor2<T> dx = eval_backward<T>(p_.critic.head, hc, ones, nullptr, false).dx;
      return cfg_.direction_input ? direction_backward(a_hat, x, dx) : dx;
    };
    Tensor2<T> virtual_actions;
    const T norm = actor_ascent_step(p_.actor, actor_opt_, b.now, bound(), cfg_.actor_lr, dq_da, &virtual_actions);
    if (probe_) probe_->actor_actions = std::move(virtual_actions);
    return norm;
  }

  T critic_update(std::span<const LowTransition<T>* const> batch) { return critic_update(prepare(batch)); }
  T actor_update(std::span<const LowTransition<T>* const> batch) { return actor_update(prepare(batch)); }

  void soft_update_targets(double tau) {
    soft_update(p_.actor_target, p_.actor, tau);
    soft_update(p_.critic_target, p_.critic, tau);
  }

  // Records which action vectors entered the most recent critic and actor
  // updates.
  struct Probe {
    Tensor2<T> critic_actions;
    Tensor2<T> actor_actions;
  };
  void attach_probe(Probe* probe) { probe_ = probe; }

  T last_q_mean() const { return last_q_mean_; }

  Tensor2<T> critic_input(const Tensor2<T>& a) const { return cfg_.direction_input ? direction_forward(a) : a; }

 private:
  LowAgentConfig cfg_;
  const Catalog<T>* catalog_;
  LowParams<T> p_;
  Optimizer<T> actor_opt_;
  Optimizer<T> critic_opt_;
  Probe* probe_ = nullptr;
  T last_q_mean_ = T(0);
};

}  // namespace hrlmg
