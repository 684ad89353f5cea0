#pragma once

// Online test (LActor plus mapping against the environment), offline rerank
// test over logged sessions, ranking metrics, and the comparison arms.

#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hrlmg/trainer.hpp"

namespace hrlmg {

// ---------------------------------------------------------------------------
// Ranking metrics over rewards listed in rank order.

// Average precision with relevance = reward > 0. NaN when nothing is
// relevant.
inline double map_score(std::span<const double> ranked) {
  double hits = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i)
    if (ranked[i] > 0.0) {
      hits += 1.0;
      sum += hits / static_cast<double>(i + 1);
    }
  return hits > 0.0 ? sum / hits : std::numeric_limits<double>::quiet_NaN();
}

// Graded gain = reward, discount 1/log2(rank + 1). NaN when the ideal DCG is 0.
inline double ndcg_at_k(std::span<const double> ranked, std::size_t k) {
  if (k < 1) throw ParameterError("ndcg_at_k: k must be at least 1");
  auto dcg = [k](std::span<const double> r) {
    double s = 0.0;
    for (std::size_t i = 0; i < std::min(k, r.size()); ++i) s += r[i] / std::log2(static_cast<double>(i) + 2.0);
    return s;
  };
  std::vector<double> ideal(ranked.begin(), ranked.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg(ideal);
  if (!(idcg > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return dcg(ranked) / idcg;
}

inline double map_score(const std::vector<double>& r) { return map_score(std::span<const double>(r)); }
inline double ndcg_at_k(const std::vector<double>& r, std::size_t k) { return ndcg_at_k(std::span<const double>(r), k); }

struct MeanStd {
  double mean = 0.0, std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double sq = 0.0;
  for (double x : v) sq += (x - m.mean) * (x - m.mean);
  m.std = v.size() > 1 ? std::sqrt(sq / static_cast<double>(v.size() - 1)) : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Policies used at test time: choose an item for the state and remove it
// from the active set.

template <class T>
using TestPolicy = std::function<ItemId(const SessionState&, ActiveItemSet<T>&)>;

// LActor plus mapping, no noise; the high level is not consulted. Dnn models
// act greedily on predicted reward.
template <class T>
TestPolicy<T> test_policy(const Model<T>& m) {
  const LowAgent<T>* low = m.low.get();
  const int k = m.cfg.recall_k;
  if (m.arm == Arm::Dnn)
    return [low, k](const SessionState& s, ActiveItemSet<T>& a) { return dnn_choose(*low, s, a, k); };
  return [low, k](const SessionState& s, ActiveItemSet<T>& a) { return actor_choose(*low, s, a, k, 0.0, nullptr); };
}

struct OnlineSession {
  int session = 0;
  int steps = 0;
  double reward = 0.0;
  int clicks = 0, orders = 0;
  bool left = false;
  std::vector<ItemId> items;
  std::vector<double> rewards;  // per-step r^ex as returned by the environment
  friend bool operator==(const OnlineSession&, const OnlineSession&) = default;
};

struct OnlineReport {
  int session_length = 0;
  std::vector<OnlineSession> sessions;
  MeanStd reward, clicks, orders;
};

inline void summarise(OnlineReport& r) {
  std::vector<double> rw, cl, od;
  for (const auto& s : r.sessions) {
    rw.push_back(s.reward);
    cl.push_back(s.clicks);
    od.push_back(s.orders);
  }
  r.reward = mean_std(rw);
  r.clicks = mean_std(cl);
  r.orders = mean_std(od);
}

// Sessions use keys 0..n-1 of the given environment; warm-up histories come
// from a stream keyed by (seed, session).
template <class T>
OnlineReport online_test(const TestPolicy<T>& policy, Environment<T>& env, const Catalog<T>& cat, int n_sessions,
                         int length, std::size_t window, int warmup, std::uint64_t seed) {
  OnlineReport rep;
  rep.session_length = length;
  for (int i = 0; i < n_sessions; ++i) {
    env.reset(static_cast<std::uint64_t>(i));
    Rng boot = stream_rng(seed, "eval.bootstrap", static_cast<std::uint64_t>(i));
    SessionState state = bootstrap_session(env, cat, window, static_cast<std::size_t>(warmup), boot);
    ActiveItemSet<T> active(cat);
    OnlineSession s;
    s.session = i;
    for (int t = 0; t < length && !active.empty(); ++t) {
      const ItemId item = policy(state, active);
      const StepOutcome o = env.step(item, state);
      s.items.push_back(item);
      s.rewards.push_back(o.reward);
      s.reward += o.reward;
      ++s.steps;
      if (o.feedback == Feedback::Click) ++s.clicks;
      if (o.feedback == Feedback::Order) ++s.orders;
      update_histories(state, item, o.feedback);
      if (o.feedback == Feedback::Leave) {
        s.left = true;
        break;
      }
    }
    rep.sessions.push_back(std::move(s));
  }
  summarise(rep);
  return rep;
}

template <class T>
OnlineReport online_test(const Model<T>& m, const Catalog<T>& cat, int n_sessions, int length) {
  SyntheticEnvironment<T> env(cat, m.cfg.user, m.cfg.seed, "eval");
  return online_test<T>(test_policy(m), env, cat, n_sessions, length, static_cast<std::size_t>(m.cfg.shape.window),
                        m.cfg.warmup_interactions, m.cfg.seed);
}

inline std::string online_csv(const OnlineReport& r) {
  std::ostringstream os;
  os << "session,session_length,steps,reward,clicks,orders,left\n";
  for (const auto& s : r.sessions)
    os << s.session << ',' << r.session_length << ',' << s.steps << ',' << io::format_real(s.reward) << ',' << s.clicks
       << ',' << s.orders << ',' << (s.left ? 1 : 0) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Offline rerank

struct RerankResult {
  std::vector<ItemId> ranking;
  std::vector<double> rewards;  // recorded reward of each ranked item
};

// The policy repeatedly picks among the session's remaining items; the
// recorded feedback of the picked item advances the state.
template <class T>
RerankResult offline_rerank(const TestPolicy<T>& policy, const SessionRecord& session, const Catalog<T>& cat,
                            std::size_t window) {
  if (session.events.empty()) throw ParameterError("offline test: empty session");
  std::map<ItemId, Feedback> recorded;
  std::vector<ItemId> items;
  for (const auto& e : session.events)
    if (recorded.emplace(e.item, e.feedback).second) items.push_back(e.item);
  ActiveItemSet<T> active(cat, items);
  SessionState state(window);
  RerankResult r;
  while (!active.empty()) {
    const ItemId id = policy(state, active);
    const Feedback f = recorded.at(id);
    r.ranking.push_back(id);
    r.rewards.push_back(feedback_reward(f));
    update_histories(state, id, f);
  }
  return r;
}

struct OfflineReport {
  double map = 0.0, ndcg20 = 0.0, ndcg40 = 0.0;
  std::size_t sessions = 0;  // sessions scored
  std::size_t skipped = 0;   // sessions without any positive reward
};

template <class T>
OfflineReport offline_test(const TestPolicy<T>& policy, const std::vector<SessionRecord>& logs, const Catalog<T>& cat,
                           std::size_t window) {
  OfflineReport rep;
  for (const auto& s : logs) {
    if (s.events.empty()) continue;
    const auto r = offline_rerank(policy, s, cat, window);
    const double ap = map_score(r.rewards);
    if (std::isnan(ap)) {
      ++rep.skipped;
      continue;
    }
    rep.map += ap;
    rep.ndcg20 += ndcg_at_k(r.rewards, 20);
    rep.ndcg40 += ndcg_at_k(r.rewards, 40);
    ++rep.sessions;
  }
  if (rep.sessions) {
    const auto n = static_cast<double>(rep.sessions);
    rep.map /= n;
    rep.ndcg20 /= n;
    rep.ndcg40 /= n;
  }
  return rep;
}

inline std::string offline_csv(const OfflineReport& r) {
  std::ostringstream os;
  os << "map,ndcg20,ndcg40,sessions,skipped\n"
     << io::format_real(r.map) << ',' << io::format_real(r.ndcg20) << ',' << io::format_real(r.ndcg40) << ','
     << r.sessions << ',' << r.skipped << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Arms

template <class T>
struct ArmResult {
  Arm arm;
  TrainResult<T> train;
  OnlineReport short_report, long_report;
};

// Trains one arm against the synthetic user and runs both online tests. All
// arms given the same cfg.seed see the same users.
template <class T>
ArmResult<T> run_baseline(Arm arm, const TrainConfig& cfg, const Catalog<T>& cat) {
  SyntheticEnvironment<T> env(cat, cfg.user, cfg.seed, "train");
  ArmResult<T> out{arm, run_training(cfg, arm, cat, env), {}, {}};
  out.short_report = online_test(out.train.model, cat, cfg.eval_sessions, cfg.eval_short);
  out.long_report = online_test(out.train.model, cat, cfg.eval_sessions, cfg.eval_long);
  return out;
}

inline std::string summary_text(const std::map<std::string, double>& values) {
  std::ostringstream os;
  os << "{\n";
  std::size_t i = 0;
  for (const auto& [k, v] : values) {
    os << "  \"" << k << "\": " << (std::isfinite(v) ? io::format_real(v) : std::string("null"));
    os << (++i < values.size() ? ",\n" : "\n");
  }
  os << "}\n";
  return os.str();
}

template <class T>
std::string arm_summary(const ArmResult<T>& r) {
  return summary_text({{"short_reward_mean", r.short_report.reward.mean},
                       {"short_reward_std", r.short_report.reward.std},
                       {"short_clicks_mean", r.short_report.clicks.mean},
                       {"short_orders_mean", r.short_report.orders.mean},
                       {"long_reward_mean", r.long_report.reward.mean},
                       {"long_reward_std", r.long_report.reward.std},
                       {"long_clicks_mean", r.long_report.clicks.mean},
                       {"long_orders_mean", r.long_report.orders.mean},
                       {"train_sessions", static_cast<double>(r.train.trace.sessions.size())}});
}

// ---------------------------------------------------------------------------
// Sensitivity sweep over alpha or M.

struct SweepRow {
  std::string param;
  double value = 0;
  std::uint64_t seed = 0;
  double reward = 0, clicks = 0, orders = 0;  // long-session means
  std::vector<ItemId> train_actions;          // every item chosen during training
  std::vector<ItemId> eval_actions;           // every item chosen in the long online test
};

inline TrainConfig sweep_config(const TrainConfig& base, const std::string& param, double value, std::uint64_t seed) {
  TrainConfig cfg = base;
  cfg.seed = seed;
  if (param == "alpha") {
    cfg.alpha = value;
  } else if (param == "M") {
    if (value < 1 || value != std::floor(value)) throw ParameterError("sweep: M values must be positive integers");
    cfg.goals = static_cast<int>(value);
  } else {
    throw ParameterError("sweep: unknown parameter '" + param + "' (expected alpha or M)");
  }
  cfg.validate();
  return cfg;
}

template <class T>
SweepRow sweep_arm(const TrainConfig& base, const std::string& param, double value, std::uint64_t seed,
                   const Catalog<T>& cat, Arm arm = Arm::HrlMg) {
  const TrainConfig cfg = sweep_config(base, param, value, seed);
  SyntheticEnvironment<T> env(cat, cfg.user, cfg.seed, "train");
  auto tr = run_training(cfg, arm, cat, env);
  const auto rep = online_test(tr.model, cat, cfg.eval_sessions, cfg.eval_long);
  SweepRow row{param, value, seed, rep.reward.mean, rep.clicks.mean, rep.orders.mean, {}, {}};
  for (const auto& s : tr.trace.steps) row.train_actions.push_back(s.item);
  for (const auto& s : rep.sessions) row.eval_actions.insert(row.eval_actions.end(), s.items.begin(), s.items.end());
  return row;
}

template <class T>
std::vector<SweepRow> sweep(const TrainConfig& base, const std::string& param, const std::vector<double>& values,
                            const std::vector<std::uint64_t>& seeds, const Catalog<T>& cat) {
  if (param != "alpha" && param != "M") throw ParameterError("sweep: unknown parameter '" + param + "' (expected alpha or M)");
  if (values.size() < 2) throw ParameterError("sweep: need at least 2 values");
  if (seeds.size() < 3) throw ParameterError("sweep: need at least 3 seeds");
  std::vector<SweepRow> rows;
  for (double v : values)
    for (auto s : seeds) rows.push_back(sweep_arm(base, param, v, s, cat));
  return rows;
}

// One CSV per metric: param,value,seed,<metric>.
inline std::map<std::string, std::string> sweep_csvs(const std::vector<SweepRow>& rows) {
  std::map<std::string, std::string> out;
  for (const char* metric : {"reward", "clicks", "orders"}) {
    std::ostringstream os;
    os << "param,value,seed," << metric << '\n';
    for (const auto& r : rows) {
      const double v = std::string(metric) == "reward" ? r.reward : std::string(metric) == "clicks" ? r.clicks : r.orders;
      os << r.param << ',' << io::format_real(r.value) << ',' << r.seed << ',' << io::format_real(v) << '\n';
    }
    out[metric] = os.str();
  }
  return out;
}

inline std::string actions_csv(const SweepRow& r) {
  std::ostringstream os;
  os << "phase,index,item\n";
  for (std::size_t i = 0; i < r.train_actions.size(); ++i) os << "train," << i << ',' << r.train_actions[i] << '\n';
  for (std::size_t i = 0; i < r.eval_actions.size(); ++i) os << "eval," << i << ',' << r.eval_actions[i] << '\n';
  return os.str();
}

}  // namespace hrlmg
