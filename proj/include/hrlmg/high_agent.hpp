#pragma once

// High-level recommendation agent. One actor encoder feeds M goal heads and
// one critic encoder feeds M evaluation heads; updating head i moves head i
// and the shared encoder, so over a round the encoders see M updates.

#include <span>
#include <vector>

#include "hrlmg/catalog.hpp"
#include "hrlmg/encoders.hpp"
#include "hrlmg/heads.hpp"
#include "hrlmg/low_agent.hpp"
#include "hrlmg/numerics.hpp"

namespace hrlmg {

// Goals g^1..g^M as the columns of a d x M matrix.
template <class T>
using GoalSet = Tensor2<T>;

// Reward credited to goal `goal` (zero-based) from one period of external
// rewards. Stage k covers steps [L*k, L*(k+1)) with L = floor(c/M); leftover
// steps join the last stage. A truncated period (fewer than c rewards) sums
// only what is available. Returns sum_{k<=goal} beta^(goal-k) phi0_k.
template <class T>
T benefit_assign(std::span<const T> rewards, int goal, int goals, double beta, int period = 0) {
  if (rewards.empty()) throw ParameterError("benefit_assign: empty reward list");
  if (goals < 1 || goal < 0 || goal >= goals) throw ParameterError("benefit_assign: goal index out of range");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ParameterError("benefit_assign: beta must lie in [0, 1]");
  const int c = period > 0 ? period : static_cast<int>(rewards.size());
  if (c < goals) throw ParameterError("benefit_assign: period shorter than the number of goals");
  if (static_cast<int>(rewards.size()) > c) throw ParameterError("benefit_assign: more rewards than the period length");
  std::vector<T> phi0(static_cast<std::size_t>(goals), T(0));
  for (int t = 0; t < static_cast<int>(rewards.size()); ++t)
    phi0[static_cast<std::size_t>(stage_goal(t, c, goals))] += rewards[static_cast<std::size_t>(t)];
  T out = T(0);
  T w = T(1);
  for (int k = goal; k >= 0; --k) {
    out += w * phi0[static_cast<std::size_t>(k)];
    w *= static_cast<T>(beta);
  }
  return out;
}

template <class T>
T benefit_assign(const std::vector<T>& rewards, int goal, int goals, double beta, int period = 0) {
  return benefit_assign<T>(std::span<const T>(rewards), goal, goals, beta, period);
}

template <class T>
struct HighActor {
  using Scalar = T;
  DualGruEncoder<T> enc;
  std::vector<BoundedHead<T>> heads;

  HighActor() = default;
  HighActor(const NetworkShape& s, int goals) : enc(s.item_dim, s.hidden, s.state_dim) {
    for (int i = 0; i < goals; ++i) heads.emplace_back(s.item_dim, s.state_dim);
  }

  template <class Self, class F>
  static void visit(Self& s, F&& f) {
    visit_prefixed("enc.", s.enc, f);
    for (std::size_t i = 0; i < s.heads.size(); ++i) visit_prefixed("head" + std::to_string(i) + ".", s.heads[i], f);
  }
};

template <class T>
struct HighCritic {
  using Scalar = T;
  DualGruEncoder<T> enc;
  std::vector<EvalHead<T>> heads;

  HighCritic() = default;
  HighCritic(const NetworkShape& s, int goals) : enc(s.item_dim, s.hidden, s.state_dim) {
    for (int i = 0; i < goals; ++i) heads.emplace_back(s.critic_hidden, s.state_dim, s.item_dim);
  }

  template <class Self, class F>
  static void visit(Self& s, F&& f) {
    visit_prefixed("enc.", s.enc, f);
    for (std::size_t i = 0; i < s.heads.size(); ++i) visit_prefixed("head" + std::to_string(i) + ".", s.heads[i], f);
  }
};

template <class T>
struct HighParams {
  using Scalar = T;
  HighActor<T> actor, actor_target;
  HighCritic<T> critic, critic_target;

  template <class Self, class F>
  static void visit(Self& s, F&& f) {
    visit_prefixed("actor.", s.actor, f);
    visit_prefixed("actor_target.", s.actor_target, f);
    visit_prefixed("critic.", s.critic, f);
    visit_prefixed("critic_target.", s.critic_target, f);
  }
};

template <class T>
struct HighTransition {
  HistoryWindow click, order;  // s^h at the start of the period
  GoalSet<T> goals;            // d x M, as executed (after noise)
  std::vector<T> rewards;      // external rewards of the period, length c or a truncated tail
  HistoryWindow next_click, next_order;
  bool terminal = false;
};

struct HighAgentConfig {
  NetworkShape shape;
  int goals = 2;  // M
  int period = 10;  // c
  double gamma = 0.95;
  double beta = 0.5;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double critic_output_bias = 0.1;
  // Critic sees only the direction of its action or goal input.
  bool direction_input = true;
};

// Deterministic-policy ascent for goal head `head` through the shared actor
// encoder. goal_grad(g) returns dQ_head/dg for the head's own outputs.
template <class T, class GoalGrad>
T goal_ascent_step(HighActor<T>& actor, int head, Optimizer<T>& opt, const EncoderInput<T>& in, T bound, double lr,
                   GoalGrad&& goal_grad) {
  if (head < 0 || head >= static_cast<int>(actor.heads.size())) throw ParameterError("goal head index out of range");
  auto& h = actor.heads[static_cast<std::size_t>(head)];
  EncoderCache<T> cache;
  const Tensor2<T> s = encode(actor.enc, in, cache);
  BoundedHeadCache<T> hc;
  const Tensor2<T> g = bounded_forward(h, s, bound, &hc);
  const Tensor2<T> dg = -(T(1) / static_cast<T>(in.batch)) * goal_grad(g);
  DualGruEncoder<T> enc_grads = zeros_like(actor.enc);
  BoundedHead<T> head_grads = zeros_like(h);
  const Tensor2<T> ds = bounded_backward(h, hc, bound, dg, &head_grads);
  encode_backward(actor.enc, cache, ds, enc_grads);
  std::vector<Binding<T>> bindings;
  bind_params("actor.enc.", actor.enc, enc_grads, bindings);
  bind_params("actor.head" + std::to_string(head) + ".", h, head_grads, bindings);
  opt.step(bindings, lr);
  return gradient_norm(bindings);
}

template <class T>
class HighAgent {
 public:
  HighAgent(const HighAgentConfig& cfg, const Catalog<T>& catalog, Rng& init_rng)
      : cfg_(cfg), catalog_(&catalog), actor_opt_(cfg.optimizer), critic_opt_(cfg.optimizer) {
    if (cfg.goals < 1) throw ParameterError("high agent: need at least one goal");
    if (cfg.period < cfg.goals) throw ParameterError("high agent: period must be at least the number of goals");
    require_dims(catalog.dim() == cfg.shape.item_dim, "high agent: catalog dimension != item_dim");
    p_.actor = HighActor<T>(cfg.shape, cfg.goals);
    p_.critic = HighCritic<T>(cfg.shape, cfg.goals);
    p_.actor.enc.init_uniform(init_rng);
    for (auto& h : p_.actor.heads) h.init_uniform(init_rng);
    p_.critic.enc.init_uniform(init_rng);
    for (auto& h : p_.critic.heads) h.init_uniform(init_rng, cfg.critic_output_bias);
    p_.actor_target = p_.actor;
    p_.critic_target = p_.critic;
  }

  const HighAgentConfig& config() const { return cfg_; }
  HighParams<T>& params() { return p_; }
  const HighParams<T>& params() const { return p_; }
  Optimizer<T>& actor_optimizer() { return actor_opt_; }
  Optimizer<T>& critic_optimizer() { return critic_opt_; }
  int goal_count() const { return cfg_.goals; }
  T bound() const { return static_cast<T>(cfg_.shape.bound); }

  // g^i = B tanh(w_g^i s^h + b_g^i) for every head, plus optional Gaussian
  // exploration noise, clamped into (-B, B).
  GoalSet<T> generate_goals(const HistoryWindow& click, const HistoryWindow& order, double noise_sigma,
                            Rng* noise_rng = nullptr) const {
    if (!(noise_sigma >= 0.0)) throw ParameterError("exploration noise sigma must be non-negative");
    const Tensor2<T> s = encode_high(click, order, p_.actor.enc, *catalog_);
    GoalSet<T> goals(cfg_.shape.item_dim, cfg_.goals);
    for (int i = 0; i < cfg_.goals; ++i)
      goals.col(i) = bounded_forward(p_.actor.heads[static_cast<std::size_t>(i)], s, bound()).col(0);
    if (noise_sigma > 0.0) {
      if (!noise_rng) throw ParameterError("generate_goals: noise requested without a generator");
      add_noise(goals, noise_sigma, *noise_rng);
    }
    clamp_open(goals, bound());
    return goals;
  }

  T evaluate_goal(const HistoryWindow& click, const HistoryWindow& order, const Tensor1<T>& g, int head) const {
    check_head(head);
    const Tensor2<T> s = encode_high(click, order, p_.critic.enc, *catalog_);
    const Tensor2<T> x = g;
    return eval_forward(p_.critic.heads[static_cast<std::size_t>(head)], s, critic_input(x))(0, 0);
  }

  struct Batch {
    EncoderInput<T> now, next;
    std::vector<Tensor2<T>> goals;  // per head: d x B
    std::vector<Tensor1<T>> reward;  // per head: r^high_i
    Tensor1<T> alive;
    // Target encodings of s^h'; fixed for a whole update round.
    Tensor2<T> next_actor_state, next_critic_state;
    bool targets_ready = false;
  };

  Batch prepare(std::span<const HighTransition<T>* const> batch) const {
    if (batch.empty()) throw ParameterError("high agent update: empty batch");
    const Index B = static_cast<Index>(batch.size());
    const int M = cfg_.goals;
    Batch out;
    std::vector<const HistoryWindow*> c0, o0, c1, o1;
    out.goals.assign(static_cast<std::size_t>(M), Tensor2<T>(cfg_.shape.item_dim, B));
    out.reward.assign(static_cast<std::size_t>(M), Tensor1<T>(B));
    out.alive.resize(B);
    for (Index k = 0; k < B; ++k) {
      const auto& tr = *batch[static_cast<std::size_t>(k)];
      require_dims(tr.goals.rows() == cfg_.shape.item_dim && tr.goals.cols() == M, "high transition: goal set shape");
      c0.push_back(&tr.click);
      o0.push_back(&tr.order);
      c1.push_back(&tr.next_click);
      o1.push_back(&tr.next_order);
      for (int i = 0; i < M; ++i) {
        out.goals[static_cast<std::size_t>(i)].col(k) = tr.goals.col(i);
        out.reward[static_cast<std::size_t>(i)][k] = benefit_assign<T>(tr.rewards, i, M, cfg_.beta, cfg_.period);
      }
      out.alive[k] = tr.terminal ? T(0) : T(1);
    }
    const Index N = cfg_.shape.window;
    out.now = make_encoder_input<T>(*catalog_, c0, o0, N);
    out.next = make_encoder_input<T>(*catalog_, c1, o1, N);
    return out;
  }

  void prepare_targets(Batch& b) const {
    b.next_actor_state = encode(p_.actor_target.enc, b.next);
    b.next_critic_state = encode(p_.critic_target.enc, b.next);
    b.targets_ready = true;
  }

  // One step on mean (y_i - Q_i(s^h, g^i))^2 with
  // y_i = r^high_i + gamma Q'_i(s^h', mu'_i(s^h')). Only head i and the shared
  // critic encoder move. Returns the loss before the step.
  T critic_update(Batch& b, int head) {
    check_head(head);
    if (!b.targets_ready) prepare_targets(b);
    const auto hi = static_cast<std::size_t>(head);
    const Tensor2<T> g_next = bounded_forward(p_.actor_target.heads[hi], b.next_actor_state, bound());
    const Tensor2<T> q_next = eval_forward(p_.critic_target.heads[hi], b.next_critic_state, critic_input(g_next));
    const T gamma = static_cast<T>(cfg_.gamma);
    const Tensor1<T> y = b.reward[hi] + gamma * b.alive.cwiseProduct(q_next.row(0).transpose());

    EncoderCache<T> cache;
    const Tensor2<T> s = encode(p_.critic.enc, b.now, cache);
    EvalHeadCache<T> hc;
    auto& h = p_.critic.heads[hi];
    const Tensor2<T> q = eval_forward(h, s, critic_input(b.goals[hi]), &hc);
    const Tensor1<T> delta = q.row(0).transpose() - y;
    const T n = static_cast<T>(b.alive.size());
    const T loss = delta.squaredNorm() / n;
    const Tensor2<T> dq = (T(2) / n) * delta.transpose();
    EvalHead<T> head_grads = zeros_like(h);
    DualGruEncoder<T> enc_grads = zeros_like(p_.critic.enc);
    const auto dins = eval_backward(h, hc, dq, &head_grads);
    encode_backward(p_.critic.enc, cache, dins.ds, enc_grads);
    std::vector<Binding<T>> bindings;
    bind_params("critic.enc.", p_.critic.enc, enc_grads, bindings);
    bind_params("critic.head" + std::to_string(head) + ".", h, head_grads, bindings);
    critic_opt_.step(bindings, cfg_.critic_lr);
    last_q_mean_ = q.mean();
    return loss;
  }

  // Ascends Q_i(s^h, mu_i(s^h)) through goal head i and the shared actor
  // encoder. critic_state may carry a precomputed critic encoding of s^h.
  T actor_update(const Batch& b, int head, const Tensor2<T>* critic_state = nullptr) {
    check_head(head);
    Tensor2<T> local;
    if (!critic_state) {
      local = encode(p_.critic.enc, b.now);
      critic_state = &local;
    }
    const auto& ch = p_.critic.heads[static_cast<std::size_t>(head)];
    auto dq_dg = [&](const Tensor2<T>& g) {
      EvalHeadCache<T> hc;
      const Tensor2<T> x = critic_input(g);
      const Tensor2<T> q = eval_forward(ch, *critic_state, x, &hc);
      const Tensor2<T> ones = Tensor2<T>::Ones(1, q.cols());
      const Tensor2<T> dx = eval_backward<T>(ch, hc, ones, nullptr, false).dx;
      return cfg_.direction_input ? direction_backward(g, x, dx) : dx;
    };
    return goal_ascent_step(p_.actor, head, actor_opt_, b.now, bound(), cfg_.actor_lr, dq_dg);
  }

  T critic_update(std::span<const HighTransition<T>* const> batch, int head) {
    Batch b = prepare(batch);
    return critic_update(b, head);
  }
  T actor_update(std::span<const HighTransition<T>* const> batch, int head) {
    return actor_update(prepare(batch), head);
  }

  struct RoundStats {
    T critic_loss = T(0);  // mean over heads
    T actor_grad_norm = T(0);
  };

  // Every critic head once, then every goal head once.
  RoundStats update_round(std::span<const HighTransition<T>* const> batch) {
    Batch b = prepare(batch);
    prepare_targets(b);
    RoundStats st;
    for (int i = 0; i < cfg_.goals; ++i) st.critic_loss += critic_update(b, i);
    const Tensor2<T> s_c = encode(p_.critic.enc, b.now);
    for (int i = 0; i < cfg_.goals; ++i) st.actor_grad_norm += actor_update(b, i, &s_c);
    st.critic_loss /= static_cast<T>(cfg_.goals);
    st.actor_grad_norm /= static_cast<T>(cfg_.goals);
    return st;
  }

  void soft_update_targets(double tau) {
    soft_update(p_.actor_target, p_.actor, tau);
    soft_update(p_.critic_target, p_.critic, tau);
  }

  T last_q_mean() const { return last_q_mean_; }

  Tensor2<T> critic_input(const Tensor2<T>& g) const { return cfg_.direction_input ? direction_forward(g) : g; }

 private:
  void check_head(int head) const {
    if (head < 0 || head >= cfg_.goals) throw ParameterError("goal head index " + std::to_string(head) + " out of range");
  }

  HighAgentConfig cfg_;
  const Catalog<T>* catalog_;
  HighParams<T> p_;
  Optimizer<T> actor_opt_;
  Optimizer<T> critic_opt_;
  T last_q_mean_ = T(0);
};

}  // namespace hrlmg
