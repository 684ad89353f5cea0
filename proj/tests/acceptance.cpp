// Acceptance suite: one PASS/FAIL line per criterion. Run with --criterion N
// for a single criterion; exit status is nonzero if any selected criterion
// fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <functional>
#include <iomanip>
#include <map>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"

using namespace hrlmg;
using hrlmg::testing::randomize;
using hrlmg::testing::random_window;
using hrlmg::testing::tiny_shape;

namespace {

// Pinned thresholds.
constexpr double kGradTolerance = 1e-4;
constexpr double kFdStep = 1e-5;
constexpr int kGradPoints = 5;
constexpr double kOracleTolerance = 1e-12;
constexpr int kComparativeSeeds = 5;
constexpr int kComparativeSessions = 200;
constexpr int kRewardOrderingVotes = 4;
constexpr int kOrdersVotes = 3;
constexpr int kLongHorizon = 300;
constexpr int kComparativeEvalSessions = 50;
constexpr std::size_t kSimulatorSessions = 5000;
constexpr double kSimulatorSharpness = 8.0;
constexpr double kSimulatorAccuracy = 0.85;

void fill_vector(Tensor1<double>& v, Rng& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (Index k = 0; k < v.size(); ++k) v[k] = dist(rng);
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

// ---------------------------------------------------------------------------
// 1. Gradient correctness

// Parameter delta of one plain SGD step with learning rate 1 is the gradient
// the update path actually applied.
template <class P>
P applied_gradient(const P& before, const P& after) {
  P g = before;
  zip_tensors(g, after, [](const std::string&, Tensor2<double>& a, const Tensor2<double>& b) { a -= b; });
  return g;
}

std::vector<LowTransition<double>> low_batch(const Catalog<double>& cat, const NetworkShape& shape, int n, Rng& rng) {
  std::vector<LowTransition<double>> out;
  const auto N = static_cast<std::size_t>(shape.window);
  std::uniform_int_distribution<ItemId> pick(0, cat.size() - 1);
  for (int k = 0; k < n; ++k) {
    LowTransition<double> tr;
    tr.browse = random_window(WindowKind::Browse, N, 1 + k % 3, cat.size(), rng);
    tr.click = random_window(WindowKind::Click, N, k % 2, cat.size(), rng);
    tr.next_browse = random_window(WindowKind::Browse, N, 2 + k % 2, cat.size(), rng);
    tr.next_click = random_window(WindowKind::Click, N, 1, cat.size(), rng);
    tr.goals = Tensor2<double>(shape.item_dim, 2);
    fill_uniform(tr.goals, 1.0, rng);
    tr.action = pick(rng);
    tr.reward = (k % 3 == 0) ? 5.0 : (k % 3 == 1 ? 1.0 : 0.0);
    tr.step = k % 4;
    tr.terminal = k == n - 1;
    out.push_back(std::move(tr));
  }
  return out;
}

std::vector<HighTransition<double>> high_batch(const Catalog<double>& cat, const NetworkShape& shape, int goals, int n,
                                               Rng& rng) {
  std::vector<HighTransition<double>> out;
  const auto N = static_cast<std::size_t>(shape.window);
  for (int k = 0; k < n; ++k) {
    HighTransition<double> tr;
    tr.click = random_window(WindowKind::Click, N, 1 + k % 3, cat.size(), rng);
    tr.order = random_window(WindowKind::Order, N, k % 2, cat.size(), rng);
    tr.next_click = random_window(WindowKind::Click, N, 2, cat.size(), rng);
    tr.next_order = random_window(WindowKind::Order, N, 1, cat.size(), rng);
    tr.goals = GoalSet<double>(shape.item_dim, goals);
    fill_uniform(tr.goals, 1.0, rng);
    tr.rewards = {0, 1, 5, 0, 1, 0};
    tr.terminal = k == n - 1;
    out.push_back(std::move(tr));
  }
  return out;
}

template <class Tr>
std::vector<const Tr*> pointers(const std::vector<Tr>& v) {
  std::vector<const Tr*> out;
  for (const auto& t : v) out.push_back(&t);
  return out;
}

double worst_low(int point, double& critic_err, double& actor_err) {
  Rng rng(1000 + static_cast<std::uint64_t>(point));
  const auto cat = generate_catalog<double>(40, 4, 4, 9 + static_cast<std::uint64_t>(point));
  LowAgentConfig cfg;
  cfg.shape = tiny_shape();
  cfg.gamma = 0.9;
  cfg.alpha = 0.5;
  cfg.period = 4;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.actor_lr = 1.0;
  cfg.critic_lr = 1.0;
  LowAgent<double> agent(cfg, cat, rng);
  auto& p = agent.params();
  for (auto* blk : {&p.critic, &p.critic_target}) {
    randomize(*blk, rng, 0.6);
    blk->head.bq.setConstant(0.4);
  }
  randomize(p.actor, rng, 0.6);
  randomize(p.actor_target, rng, 0.6);
  const auto store = low_batch(cat, cfg.shape, 6, rng);
  const auto ptrs = pointers(store);
  const auto b = agent.prepare(ptrs);

  // Critic: mean squared TD error with the target held fixed.
  const Tensor2<double> a_next = bounded_forward(p.actor_target.head, encode(p.actor_target.enc, b.next), 1.0);
  const Tensor2<double> q_next =
      eval_forward(p.critic_target.head, encode(p.critic_target.enc, b.next), agent.critic_input(a_next));
  const Tensor1<double> y = b.reward + cfg.gamma * b.alive.cwiseProduct(q_next.row(0).transpose());
  auto critic_loss = [&] {
    const Tensor2<double> q = eval_forward(p.critic.head, encode(p.critic.enc, b.now), agent.critic_input(b.actions));
    return (q.row(0).transpose() - y).squaredNorm() / static_cast<double>(y.size());
  };
  const auto before_c = p.critic;
  agent.critic_update(b);
  const auto gc = applied_gradient(before_c, p.critic);
  p.critic = before_c;
  critic_err = grad_check(critic_loss, p.critic, gc, kFdStep);

  // Actor: minus mean Q at the actor's virtual output.
  const Tensor2<double> s_c = encode(p.critic.enc, b.now);
  auto actor_loss = [&] {
    const Tensor2<double> a = bounded_forward(p.actor.head, encode(p.actor.enc, b.now), 1.0);
    return -eval_forward(p.critic.head, s_c, agent.critic_input(a)).mean();
  };
  const auto before_a = p.actor;
  agent.actor_update(b);
  const auto ga = applied_gradient(before_a, p.actor);
  p.actor = before_a;
  actor_err = grad_check(actor_loss, p.actor, ga, kFdStep);
  return std::max(critic_err, actor_err);
}

double worst_high(int point, int head, double& critic_err, double& actor_err) {
  Rng rng(2000 + static_cast<std::uint64_t>(10 * point + head));
  const auto cat = generate_catalog<double>(40, 4, 4, 19 + static_cast<std::uint64_t>(point));
  HighAgentConfig cfg;
  cfg.shape = tiny_shape();
  cfg.goals = 2;
  cfg.period = 6;
  cfg.gamma = 0.9;
  cfg.beta = 0.5;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.actor_lr = 1.0;
  cfg.critic_lr = 1.0;
  HighAgent<double> agent(cfg, cat, rng);
  auto& p = agent.params();
  for (auto* blk : {&p.critic, &p.critic_target}) {
    randomize(*blk, rng, 0.6);
    for (auto& h : blk->heads) h.bq.setConstant(0.4);
  }
  randomize(p.actor, rng, 0.6);
  randomize(p.actor_target, rng, 0.6);
  const auto store = high_batch(cat, cfg.shape, cfg.goals, 5, rng);
  const auto ptrs = pointers(store);
  auto b = agent.prepare(ptrs);
  agent.prepare_targets(b);
  const auto hi = static_cast<std::size_t>(head);

  const Tensor2<double> g_next = bounded_forward(p.actor_target.heads[hi], b.next_actor_state, 1.0);
  const Tensor2<double> q_next = eval_forward(p.critic_target.heads[hi], b.next_critic_state, agent.critic_input(g_next));
  const Tensor1<double> y = b.reward[hi] + cfg.gamma * b.alive.cwiseProduct(q_next.row(0).transpose());
  auto critic_loss = [&] {
    const Tensor2<double> q =
        eval_forward(p.critic.heads[hi], encode(p.critic.enc, b.now), agent.critic_input(b.goals[hi]));
    return (q.row(0).transpose() - y).squaredNorm() / static_cast<double>(y.size());
  };
  const auto before_c = p.critic;
  agent.critic_update(b, head);
  const auto gc = applied_gradient(before_c, p.critic);
  p.critic = before_c;
  critic_err = grad_check(critic_loss, p.critic, gc, kFdStep);

  const Tensor2<double> s_c = encode(p.critic.enc, b.now);
  auto actor_loss = [&] {
    const Tensor2<double> g = bounded_forward(p.actor.heads[hi], encode(p.actor.enc, b.now), 1.0);
    return -eval_forward(p.critic.heads[hi], s_c, agent.critic_input(g)).mean();
  };
  const auto before_a = p.actor;
  agent.actor_update(b, head, &s_c);
  const auto ga = applied_gradient(before_a, p.actor);
  p.actor = before_a;
  actor_err = grad_check(actor_loss, p.actor, ga, kFdStep);
  return std::max(critic_err, actor_err);
}

double worst_simulator(int point) {
  Rng rng(3000 + static_cast<std::uint64_t>(point));
  const auto cat = generate_catalog<double>(40, 4, 4, 29 + static_cast<std::uint64_t>(point));
  LearnedSimulator<double> sim(tiny_shape(), cat);
  randomize(sim.net(), rng, 0.6);
  std::vector<SimulatorExample> ex;
  std::uniform_int_distribution<ItemId> pick(0, cat.size() - 1);
  for (int k = 0; k < 6; ++k)
    ex.push_back({random_window(WindowKind::Browse, 3, 1 + k % 3, cat.size(), rng),
                  random_window(WindowKind::Click, 3, k % 2, cat.size(), rng), pick(rng), k % 3});
  const auto ptrs = pointers(ex);
  std::vector<int> labels;
  for (const auto& e : ex) labels.push_back(e.label);
  auto [in, x] = sim.inputs(ptrs);
  auto loss = [&] { return simulator_loss<double>(simulator_forward(sim.net(), in, x), labels); };
  SimulatorCache<double> cache;
  simulator_forward(sim.net(), in, x, &cache);
  auto grads = zeros_like(sim.net());
  simulator_backward(sim.net(), cache, labels, grads);
  return grad_check(loss, sim.net(), grads, kFdStep);
}

void criterion_gradients(Outcome& out) {
  double worst = 0;
  std::map<std::string, double> per;
  auto note = [&](const std::string& k, double e) {
    per[k] = std::max(per[k], e);
    worst = std::max(worst, e);
  };
  for (int point = 0; point < kGradPoints; ++point) {
    double c = 0, a = 0;
    worst_low(point, c, a);
    note("LCritic", c);
    note("LActor", a);
    for (int head = 0; head < 2; ++head) {
      worst_high(point, head, c, a);
      note("HCritic" + std::to_string(head + 1), c);
      note("HActor" + std::to_string(head + 1), a);
    }
    note("simulator", worst_simulator(point));
  }
  for (const auto& [k, e] : per) {
    out.detail << ' ' << k << '=' << std::scientific << std::setprecision(1) << e;
    out.check(e <= kGradTolerance, k + " above tolerance");
  }
  out.detail << std::defaultfloat << std::setprecision(6) << "; worst " << worst << " (tolerance " << kGradTolerance
             << ", " << kGradPoints << " points each)";
}

// ---------------------------------------------------------------------------
// 2. Equation oracles

// One-based formulation written directly from the stage inequality.
int stage_oracle(int t_c, int c, int M) {
  const int L = c / M;
  for (int j = 1; j <= M; ++j)
    if (L * (j - 1) < t_c && t_c <= L * j) return j;
  return M;
}

double benefit_oracle(const std::vector<double>& r, int i, int M, double beta, int c) {
  std::vector<double> phi(static_cast<std::size_t>(M + 1), 0.0);
  for (int t = 1; t <= static_cast<int>(r.size()); ++t) phi[static_cast<std::size_t>(stage_oracle(t, c, M))] += r[static_cast<std::size_t>(t - 1)];
  double s = 0;
  for (int k = 1; k <= i; ++k) s += std::pow(beta, i - k) * phi[static_cast<std::size_t>(k)];
  return s;
}

double cosine_oracle(const Tensor1<double>& a, const Tensor1<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (Index k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  if (aa == 0 || bb == 0) return 0;
  return ab / std::sqrt(aa * bb);
}

double ndcg_oracle(std::vector<double> r, std::size_t k) {
  auto dcg = [k](const std::vector<double>& v) {
    double s = 0;
    for (std::size_t i = 0; i < v.size() && i < k; ++i) s += v[i] * std::log(2.0) / std::log(static_cast<double>(i + 2));
    return s;
  };
  const double got = dcg(r);
  std::sort(r.rbegin(), r.rend());
  return got / dcg(r);
}

double map_oracle(const std::vector<double>& r) {
  double hits = 0, sum = 0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (!(r[k] > 0)) continue;
    double rel = 0;
    for (std::size_t j = 0; j <= k; ++j) rel += r[j] > 0;
    sum += rel / static_cast<double>(k + 1);
    hits += 1;
  }
  return sum / hits;
}

void criterion_oracles(Outcome& out) {
  std::map<std::string, long> cases;
  auto near = [](double a, double b) { return std::abs(a - b) <= kOracleTolerance * std::max(1.0, std::abs(b)); };

  // stage_goal: every (c, M, t_c) with c <= 12, M <= 4.
  for (int c = 1; c <= 12; ++c)
    for (int M = 1; M <= std::min(4, c); ++M)
      for (int t = 1; t <= c; ++t) {
        out.check(stage_goal(t - 1, c, M) + 1 == stage_oracle(t, c, M), "stage_goal");
        ++cases["stage_goal"];
      }
  out.check(stage_goal(4, 10, 2) == 0 && stage_goal(5, 10, 2) == 1 && stage_goal(9, 10, 3) == 2, "stage_goal examples");

  // benefit_assign: every reward list over {0,1,5} for c <= 6, sampled lists up to c = 12.
  Rng rng(42);
  const double vals[] = {0, 1, 5};
  for (int c = 1; c <= 12; ++c) {
    std::vector<std::vector<double>> lists;
    if (c <= 6) {
      int total = 1;
      for (int i = 0; i < c; ++i) total *= 3;
      for (int code = 0; code < total; ++code) {
        std::vector<double> r;
        for (int i = 0, x = code; i < c; ++i, x /= 3) r.push_back(vals[x % 3]);
        lists.push_back(r);
      }
    } else {
      std::uniform_int_distribution<int> pick(0, 2);
      for (int n = 0; n < 200; ++n) {
        std::vector<double> r;
        for (int i = 0; i < c; ++i) r.push_back(vals[pick(rng)]);
        lists.push_back(r);
      }
    }
    for (const auto& r : lists)
      for (int M = 1; M <= std::min(4, c); ++M)
        for (double beta : {0.0, 0.3, 0.5, 1.0})
          for (int i = 1; i <= M; ++i) {
            out.check(near(benefit_assign(r, i - 1, M, beta, c), benefit_oracle(r, i, M, beta, c)), "benefit_assign");
            ++cases["benefit_assign"];
          }
  }
  const std::vector<double> ex{0, 1, 0, 5};
  out.check(benefit_assign(ex, 0, 2, 0.0) == 1 && benefit_assign(ex, 1, 2, 0.0) == 5, "benefit beta=0 example");
  out.check(benefit_assign(ex, 0, 2, 1.0) == 1 && benefit_assign(ex, 1, 2, 1.0) == 6, "benefit beta=1 example");
  out.check(benefit_assign(ex, 1, 2, 0.5) == 5.5, "benefit beta=0.5 example");

  // internal_reward and total_reward.
  for (int n = 0; n < 2000; ++n) {
    const int M = 1 + n % 4, c = M + n % 9, d = 2 + n % 5;
    Tensor2<double> g(d, M);
    Tensor1<double> a(d);
    fill_uniform(g, 1.0, rng);
    fill_vector(a, rng);
    if (n % 17 == 0) g.setZero();
    const int step = n % c;
    const int j = stage_oracle(step + 1, c, M) - 1;
    const double r_in = internal_reward<double>(g, a, step, c);
    out.check(near(r_in, cosine_oracle(a, g.col(j))), "internal_reward");
    const double alpha = 0.25 * (n % 5);
    out.check(total_reward(1.0, r_in, alpha) == 1.0 + alpha * r_in, "total_reward");
    ++cases["internal_reward"];
  }
  {
    Tensor2<double> g(2, 1);
    g << 0.6, 0.8;
    Tensor1<double> same = g.col(0), perp(2), opp = -g.col(0);
    perp << -0.8, 0.6;
    out.check(near(internal_reward<double>(g, same, 0, 1), 1) && std::abs(internal_reward<double>(g, perp, 0, 1)) < 1e-15 &&
                  near(internal_reward<double>(g, opp, 0, 1), -1),
              "internal_reward examples");
    out.check(total_reward(1.0, 0.5, 0.5) == 1.25 && total_reward(5.0, -1.0, 0.5) == 4.5 && total_reward(3.0, 0.7, 0.0) == 3.0,
              "total_reward examples");
  }

  // soft_update: elementwise against the formula on random blocks.
  for (int n = 0; n < 50; ++n) {
    EvalHead<double> online(3, 4, 2), target(3, 4, 2);
    randomize(online, rng, 2.0);
    randomize(target, rng, 2.0);
    const double tau = n == 0 ? 0.0 : n == 1 ? 1.0 : 0.02 * n;
    auto expect = target;
    zip_tensors(expect, online, [&](const std::string&, Tensor2<double>& e, const Tensor2<double>& o) {
      for (Index k = 0; k < e.size(); ++k) e.data()[k] = tau * o.data()[k] + (1 - tau) * e.data()[k];
    });
    soft_update(target, online, tau);
    bool ok = true;
    zip_tensors(target, expect, [&](const std::string&, Tensor2<double>& t, const Tensor2<double>& e) {
      ok = ok && (t - e).cwiseAbs().maxCoeff() <= 1e-15;
    });
    if (tau == 1.0) ok = ok && bitwise_equal(target, online);
    out.check(ok, "soft_update");
    ++cases["soft_update"];
  }
  {
    Tensor2<double> th(1, 1), tt(1, 1);
    BoundedHead<double> on(1, 1), tg(1, 1);
    on.W(0, 0) = 2;
    tg.W(0, 0) = 0;
    soft_update(tg, on, 0.5);
    out.check(tg.W(0, 0) == 1.0, "soft_update example");
  }

  // map_action: brute force with removal, catalogs up to 100 items.
  for (int n = 0; n < 40; ++n) {
    const Index items = 2 + (n * 7) % 99, d = 2 + n % 4;
    Tensor2<double> emb(d, items);
    fill_uniform(emb, 1.0, rng);
    if (n % 5 == 0) emb.col(items - 1) = 2.0 * emb.col(0);  // an exact direction tie
    std::vector<ItemId> ids(static_cast<std::size_t>(items));
    for (Index k = 0; k < items; ++k) ids[static_cast<std::size_t>(k)] = static_cast<ItemId>(items - 1 - k) * 3;
    Catalog<double> cat(ids, emb);
    ActiveItemSet<double> active(cat);
    std::set<ItemId> left(ids.begin(), ids.end());
    Tensor1<double> a(d);
    fill_vector(a, rng);
    while (!left.empty()) {
      ItemId best = kNoItem;
      double bs = -2;
      for (ItemId id : left) {
        const double s = cosine_oracle(a, cat.embedding(id));
        if (s > bs + 1e-12 || (std::abs(s - bs) <= 1e-12 && id < best)) {
          bs = s;
          best = id;
        }
      }
      Tensor1<double> scaled = 2.0 * a;
      ActiveItemSet<double> copy = active;
      const auto m2 = map_action(scaled, copy);
      const auto m = map_action(a, active);
      out.check(m.id == best && m2.id == best, "map_action");
      left.erase(best);
      ++cases["map_action"];
    }
  }
  {
    const auto cat = hrlmg::testing::catalog_of({{1, 0}, {0, 1}, {-1, 0}});
    ActiveItemSet<double> active(cat);
    Tensor1<double> a(2);
    a << 0.9, 0.1;
    const auto first = map_action(a, active);
    const auto second = map_action(a, active);
    out.check(first.id == 0 && second.id == 1, "map_action example");
  }

  // NDCG and MAP over every reward list of length <= 6.
  for (int len = 1; len <= 6; ++len) {
    int total = 1;
    for (int i = 0; i < len; ++i) total *= 3;
    for (int code = 0; code < total; ++code) {
      std::vector<double> r;
      for (int i = 0, x = code; i < len; ++i, x /= 3) r.push_back(vals[x % 3]);
      if (std::all_of(r.begin(), r.end(), [](double x) { return x == 0; })) continue;
      for (std::size_t k : {std::size_t(1), std::size_t(3), std::size_t(20), std::size_t(40)})
        out.check(near(ndcg_at_k(r, k), ndcg_oracle(r, k)), "ndcg");
      out.check(near(map_score(r), map_oracle(r)), "map");
      ++cases["ndcg_map"];
    }
  }
  out.check(std::abs(ndcg_at_k(std::vector<double>{1, 0, 5}, 3) - 3.5 / (5 + 1 / std::log2(3.0))) < 1e-12 &&
                std::abs(ndcg_at_k(std::vector<double>{1, 0, 5}, 3) - 0.6216) < 5e-5,
            "ndcg worked example");
  out.check(map_score(std::vector<double>{1, 0, 0}) == 1.0 && ndcg_at_k(std::vector<double>{5, 1, 0}, 20) == 1.0,
            "metric trivial examples");
  {
    const std::vector<double> r{0, 1, 0, 5, 0};
    out.check(near(ndcg_at_k(r, 20), (1 / std::log2(3.0) + 5 / std::log2(5.0)) / (5 + 1 / std::log2(3.0))),
              "five-item hand case");
  }
  for (const auto& [k, n] : cases) out.detail << ' ' << k << '=' << n;
  out.detail << " cases checked";
}

// ---------------------------------------------------------------------------
// 3. Structural sharing

void criterion_sharing(Outcome& out) {
  for (int M = 1; M <= 4; ++M) {
    Rng rng(50 + static_cast<std::uint64_t>(M));
    const auto cat = generate_catalog<double>(40, 4, 4, 3);
    HighAgentConfig cfg;
    cfg.shape = tiny_shape();
    cfg.goals = M;
    cfg.period = 8;
    HighAgent<double> agent(cfg, cat, rng);
    const auto store = high_batch(cat, cfg.shape, M, 4, rng);
    const auto ptrs = pointers(store);
    agent.update_round(ptrs);
    std::size_t enc = 0, head = 0;
    for (const auto* counts : {&agent.actor_optimizer().application_counts(), &agent.critic_optimizer().application_counts()})
      for (const auto& [name, n] : *counts) {
        const bool shared = name.find(".enc.") != std::string::npos;
        out.check(n == (shared ? static_cast<std::uint64_t>(M) : 1u), name + " count " + std::to_string(n));
        (shared ? enc : head) += 1;
      }
    // Every head of both networks was touched.
    for (int i = 0; i < M; ++i) {
      out.check(agent.actor_optimizer().applications("actor.head" + std::to_string(i) + ".W") == 1, "actor head missing");
      out.check(agent.critic_optimizer().applications("critic.head" + std::to_string(i) + ".wq") == 1, "critic head missing");
    }
    out.detail << " M=" << M << ": " << enc << " encoder tensors x" << M << ", " << head << " head tensors x1;";
  }
}

// ---------------------------------------------------------------------------
// 4. Schedule

void criterion_schedule(Outcome& out) {
  TrainConfig cfg;
  cfg.sessions = 3;
  cfg.session_length = 25;
  cfg.period = 5;
  cfg.goals = 2;
  cfg.low_batch = 8;
  cfg.high_batch = 2;
  cfg.warmup_samples = 0;
  cfg.user.leave_slope = 0.0;
  cfg.user.leave_base = 0.0;
  const auto cat = generate_catalog<float>(cfg.catalog_items, cfg.shape.item_dim, cfg.catalog_clusters, cfg.seed);
  SyntheticEnvironment<float> env(cat, cfg.user, cfg.seed, "train");
  const auto r = run_training(cfg, Arm::HrlMg, cat, env);
  for (const auto& s : r.trace.sessions) {
    out.check(s.low_transitions == 25, "low transitions " + std::to_string(s.low_transitions));
    out.check(s.high_transitions == 5, "high transitions " + std::to_string(s.high_transitions));
  }
  std::size_t low_seen = 0, high_seen = 0, periods = 0, post_warm = 0;
  for (std::size_t i = 0; i < r.trace.steps.size(); ++i) {
    const auto& st = r.trace.steps[i];
    if (i > 0 && r.trace.steps[i - 1].session == st.session && st.t % cfg.period != 0)
      out.check(st.goal_hash == r.trace.steps[i - 1].goal_hash, "goal changed inside a period");
    if (st.t % cfg.period == 0) ++periods;
    ++low_seen;
    const bool low_warm = low_seen >= cfg.low_batch;
    const bool high_warm = high_seen + (st.t == cfg.session_length - 1 ? 0 : static_cast<std::size_t>(st.high_push)) >= cfg.high_batch;
    high_seen += static_cast<std::size_t>(st.high_push);
    out.check(st.low_updates == (low_warm ? 1 : 0), "low update cadence");
    out.check(st.high_updates == (high_warm ? 1 : 0), "high update cadence");
    out.check(st.target_updates == 2 * st.low_updates + 2 * st.high_updates, "target update cadence");
    if (low_warm && high_warm) {
      ++post_warm;
      out.check(st.target_updates == 4, "targets not updated every post-warm-up step");
    }
  }
  out.detail << " sessions=" << r.trace.sessions.size() << " low/session=25 high/session=5 periods=" << periods
             << " post-warm-up steps with all 4 target networks updated=" << post_warm;
}

// ---------------------------------------------------------------------------
// 5. Comparative ordering

void criterion_comparative(Outcome& out) {
  int reward_votes = 0, order_votes = 0;
  std::cout << "  seed  dnn_reward  ddpg_reward  hrl_reward  hrlmg_reward  hrl_orders  hrlmg_orders  seconds\n";
  for (int seed = 1; seed <= kComparativeSeeds; ++seed) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.sessions = kComparativeSessions;
    cfg.goals = 2;
    cfg.alpha = 0.5;
    cfg.eval_long = kLongHorizon;
    cfg.catalog_items = 1000;
    cfg.catalog_clusters = 10;
    const auto cat = generate_catalog<float>(cfg.catalog_items, cfg.shape.item_dim, cfg.catalog_clusters, cfg.seed,
                                             cfg.catalog_noise);
    std::map<Arm, OnlineReport> rep;
    for (Arm arm : {Arm::Dnn, Arm::Ddpg, Arm::Hrl, Arm::HrlMg}) {
      SyntheticEnvironment<float> env(cat, cfg.user, cfg.seed, "train");
      const auto r = run_training(cfg, arm, cat, env);
      rep[arm] = online_test(r.model, cat, kComparativeEvalSessions, kLongHorizon);
    }
    const double dnn = rep[Arm::Dnn].reward.mean, ddpg = rep[Arm::Ddpg].reward.mean, hrl = rep[Arm::Hrl].reward.mean,
                 mg = rep[Arm::HrlMg].reward.mean;
    const bool ordered = mg > ddpg && ddpg > dnn;
    const bool orders = rep[Arm::HrlMg].orders.mean >= rep[Arm::Hrl].orders.mean;
    reward_votes += ordered;
    order_votes += orders;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("  %4d  %10.2f  %11.2f  %10.2f  %12.2f  %10.2f  %12.2f  %7.0f  %s%s\n", seed, dnn, ddpg, hrl, mg,
                rep[Arm::Hrl].orders.mean, rep[Arm::HrlMg].orders.mean, secs, ordered ? "ordered" : "not-ordered",
                orders ? "" : " orders<hrl");
    std::fflush(stdout);
  }
  out.check(reward_votes >= kRewardOrderingVotes, "HRL-MG > DDPG > DNN in fewer than 4 of 5 seeds");
  out.check(order_votes >= kOrdersVotes, "HRL-MG orders >= HRL orders in fewer than 3 of 5 seeds");
  out.detail << " reward ordering held in " << reward_votes << "/" << kComparativeSeeds << " seeds (need "
             << kRewardOrderingVotes << "); HRL-MG orders >= HRL in " << order_votes << "/" << kComparativeSeeds
             << " (need " << kOrdersVotes << ")";
}

// ---------------------------------------------------------------------------
// 6. Simulator methodology

void criterion_simulator(Outcome& out) {
  TrainConfig cfg;
  const auto cat = generate_catalog<float>(cfg.catalog_items, cfg.shape.item_dim, cfg.catalog_clusters, cfg.seed,
                                           cfg.catalog_noise);
  LogConfig lc;
  lc.user = cfg.user;
  lc.user.kappa_c = kSimulatorSharpness;
  lc.user.kappa_o = kSimulatorSharpness;
  lc.policy = LoggingPolicy::Mixed;
  const auto logs = generate_logs(kSimulatorSessions, cat, lc, cfg.seed);
  SimulatorTrainConfig sc;
  auto [sim, rep] = train_simulator(logs, cat, cfg.shape, sc, cfg.seed);
  out.check(rep.accuracy >= kSimulatorAccuracy, "held-out accuracy below threshold");
  out.detail << " held-out accuracy " << rep.accuracy << " (threshold " << kSimulatorAccuracy << "), majority-class baseline "
             << rep.majority_baseline << ", " << rep.train_examples << " train / " << rep.test_examples << " test events";
}

// ---------------------------------------------------------------------------
// 7. Sweep plumbing

void criterion_sweep(Outcome& out) {
  TrainConfig base;
  base.sessions = 40;
  base.session_length = 50;
  base.eval_sessions = 5;
  base.eval_long = kLongHorizon;
  base.sweep_seeds = {1, 2, 3};
  const auto cat = generate_catalog<float>(base.catalog_items, base.shape.item_dim, base.catalog_clusters, 11,
                                           base.catalog_noise);
  const auto alpha_rows = sweep<float>(base, "alpha", {0.0, 0.5, 1.0}, base.sweep_seeds, cat);
  const auto m_rows = sweep<float>(base, "M", {1, 2, 3, 4}, base.sweep_seeds, cat);
  for (const auto* rows : {&alpha_rows, &m_rows}) {
    const auto csvs = sweep_csvs(*rows);
    out.check(csvs.size() == 3, "three metric CSVs");
    for (const auto& [metric, text] : csvs) {
      const auto lines = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
      out.check(lines == rows->size() + 1, metric + " row count");
      out.check(text.find("nan") == std::string::npos && text.find("inf") == std::string::npos, metric + " non-finite");
    }
  }
  out.check(alpha_rows.size() == 9 && m_rows.size() == 12, "rows per sweep");
  int equal = 0, m1_equal = 0;
  for (std::size_t k = 0; k < base.sweep_seeds.size(); ++k) {
    const auto seed = base.sweep_seeds[k];
    const auto ddpg = sweep_arm<float>(base, "alpha", 0.0, seed, cat, Arm::Ddpg);
    const auto& zero = alpha_rows[k];  // alpha=0 rows come first
    const bool same = zero.value == 0.0 && zero.train_actions == ddpg.train_actions && zero.eval_actions == ddpg.eval_actions;
    equal += same;
    out.check(same, "alpha=0 actions differ from DDPG on seed " + std::to_string(seed));
    const auto hrl = sweep_arm<float>(base, "M", 1, seed, cat, Arm::Hrl);
    const auto& m1 = m_rows[k];
    const bool same_m1 = m1.value == 1.0 && m1.train_actions == hrl.train_actions && m1.eval_actions == hrl.eval_actions;
    m1_equal += same_m1;
    out.check(same_m1, "M=1 actions differ from HRL on seed " + std::to_string(seed));
  }
  out.detail << " alpha rows=" << alpha_rows.size() << " M rows=" << m_rows.size() << "; alpha=0 == DDPG action traces on "
             << equal << "/3 seeds; M=1 == HRL on " << m1_equal << "/3 seeds";
}

// ---------------------------------------------------------------------------
// 8. Determinism and round-trips

void criterion_roundtrips(Outcome& out) {
  TrainConfig cfg;
  cfg.sessions = 4;
  cfg.session_length = 30;
  cfg.low_batch = 16;
  cfg.high_batch = 4;
  cfg.warmup_samples = 0;
  cfg.eval_sessions = 3;
  const auto cat = generate_catalog<float>(cfg.catalog_items, cfg.shape.item_dim, cfg.catalog_clusters, cfg.seed);
  for (Arm arm : {Arm::HrlMg, Arm::Hrl, Arm::Ddpg, Arm::Dnn}) {
    SyntheticEnvironment<float> e1(cat, cfg.user, cfg.seed, "train"), e2(cat, cfg.user, cfg.seed, "train");
    const auto a = run_training(cfg, arm, cat, e1);
    const auto b = run_training(cfg, arm, cat, e2);
    out.check(a.trace == b.trace && steps_csv(a.trace) == steps_csv(b.trace), std::string("trace differs for ") + to_string(arm));
    out.check(bitwise_equal(a.model.low->params(), b.model.low->params()), "params differ");
    // Checkpoint round-trip: exact text, exact params, identical later behaviour.
    const auto text = format_checkpoint(to_checkpoint(a.model));
    const auto ck = parse_checkpoint<float>(text);
    out.check(format_checkpoint(ck) == text, "checkpoint text changed");
    const auto back = from_checkpoint(ck, cat);
    out.check(bitwise_equal(back.low->params(), a.model.low->params()), "checkpoint low params");
    if (a.model.high) out.check(bitwise_equal(back.high->params(), a.model.high->params()), "checkpoint high params");
    out.check(online_csv(online_test(back, cat, 2, 40)) == online_csv(online_test(a.model, cat, 2, 40)),
              "behaviour after checkpoint reload");
  }
  // Log and catalog files.
  const auto dir = std::filesystem::temp_directory_path() / ("hrlmg_acceptance_" + std::to_string(::getpid()));
  LogConfig lc;
  lc.policy = LoggingPolicy::Mixed;
  const auto logs = generate_logs(200, cat, lc, 5);
  save_logs(logs, dir / "logs.txt");
  const auto back_logs = ingest_logs(dir / "logs.txt");
  out.check(back_logs == logs && format_logs(back_logs) == format_logs(logs), "log round-trip");
  out.check(generate_logs(200, cat, lc, 5) == logs, "log generation not deterministic");
  save_catalog(cat, dir / "catalog.txt");
  const auto back_cat = load_catalog<float>(dir / "catalog.txt");
  out.check(format_catalog(back_cat) == format_catalog(cat) && back_cat.embeddings() == cat.embeddings(), "catalog round-trip");
  std::filesystem::remove_all(dir);
  out.detail << " 4 arms retrained bitwise-identically; checkpoint, log (" << logs.size()
             << " sessions) and catalog round-trips exact";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HRL-MG acceptance suite"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"gradient correctness", criterion_gradients},
      {"equation oracles", criterion_oracles},
      {"structural sharing", criterion_sharing},
      {"training schedule", criterion_schedule},
      {"comparative ordering", criterion_comparative},
      {"simulator accuracy", criterion_simulator},
      {"sensitivity sweep plumbing", criterion_sweep},
      {"determinism and round-trips", criterion_roundtrips},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<int>(i + 1) != only) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ":"
              << o.detail.str() << " (" << std::fixed << std::setprecision(1) << secs << " s)" << std::defaultfloat
              << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
