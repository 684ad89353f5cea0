#pragma once

// Training loop: transition generation interleaved with parameter updates for
// both agents, target soft updates, exploration schedule and traces.

#include <cstdint>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hrlmg/catalog.hpp"
#include "hrlmg/checkpoint.hpp"
#include "hrlmg/config.hpp"
#include "hrlmg/environment.hpp"
#include "hrlmg/high_agent.hpp"
#include "hrlmg/low_agent.hpp"
#include "hrlmg/replay.hpp"
#include "hrlmg/rng.hpp"

namespace hrlmg {

// HrlMg: both agents with M goals. Hrl: the same code path with M = 1.
// Ddpg: the low-level agent alone, no goals. Dnn: an immediate-reward
// regressor with greedy item choice.
enum class Arm { HrlMg, Hrl, Ddpg, Dnn };

inline const char* to_string(Arm a) {
  switch (a) {
    case Arm::HrlMg: return "hrlmg";
    case Arm::Hrl: return "hrl";
    case Arm::Ddpg: return "ddpg";
    case Arm::Dnn: return "dnn";
  }
  return "?";
}

inline std::optional<Arm> parse_arm(std::string_view s) {
  if (s == "hrlmg") return Arm::HrlMg;
  if (s == "hrl") return Arm::Hrl;
  if (s == "ddpg") return Arm::Ddpg;
  if (s == "dnn") return Arm::Dnn;
  return std::nullopt;
}

inline bool has_high_level(Arm a) { return a == Arm::HrlMg || a == Arm::Hrl; }

inline int arm_goals(Arm a, const TrainConfig& cfg) { return a == Arm::Hrl ? 1 : cfg.goals; }

inline LowAgentConfig low_config(const TrainConfig& cfg, Arm arm) {
  LowAgentConfig lc;
  lc.shape = cfg.shape;
  lc.gamma = cfg.gamma;
  lc.alpha = cfg.alpha;
  lc.period = cfg.period;
  lc.actor_lr = cfg.actor_lr;
  lc.critic_lr = cfg.critic_lr;
  lc.optimizer = cfg.optimizer;
  lc.critic_output_bias = cfg.critic_output_bias;
  lc.direction_input = cfg.critic_direction_input;
  lc.mapped_target = cfg.mapped_target;
  if (arm == Arm::Ddpg) lc.alpha = 0.0;
  if (arm == Arm::Dnn) {
    lc.gamma = 0.0;
    lc.alpha = 0.0;
    lc.critic_lr = cfg.dnn_lr;
  }
  return lc;
}

inline HighAgentConfig high_config(const TrainConfig& cfg, Arm arm) {
  HighAgentConfig hc;
  hc.shape = cfg.shape;
  hc.goals = arm_goals(arm, cfg);
  hc.period = cfg.period;
  hc.gamma = cfg.gamma;
  hc.beta = cfg.beta;
  hc.actor_lr = cfg.actor_lr;
  hc.critic_lr = cfg.critic_lr;
  hc.optimizer = cfg.optimizer;
  hc.critic_output_bias = cfg.critic_output_bias;
  hc.direction_input = cfg.critic_direction_input;
  return hc;
}

// Trained parameters of one arm. For Dnn only the low-level critic is used.
template <class T>
struct Model {
  Arm arm = Arm::HrlMg;
  TrainConfig cfg;
  std::unique_ptr<LowAgent<T>> low;
  std::unique_ptr<HighAgent<T>> high;

  Model(Arm a, const TrainConfig& c, const Catalog<T>& cat) : arm(a), cfg(c) {
    cfg.validate();
    Rng low_init = stream_rng(cfg.seed, "low.init");
    low = std::make_unique<LowAgent<T>>(low_config(cfg, arm), cat, low_init);
    if (has_high_level(arm)) {
      Rng high_init = stream_rng(cfg.seed, "high.init");
      high = std::make_unique<HighAgent<T>>(high_config(cfg, arm), cat, high_init);
    }
  }
};

template <class T>
Checkpoint<T> to_checkpoint(const Model<T>& m) {
  Checkpoint<T> ck;
  ck.meta["arm"] = to_string(m.arm);
  for (const auto& key : config_keys()) ck.meta["config." + key] = get_config_value(m.cfg, key);
  ck.store("low.", m.low->params());
  if (m.high) ck.store("high.", m.high->params());
  return ck;
}

template <class T>
TrainConfig config_from_checkpoint(const Checkpoint<T>& ck) {
  TrainConfig cfg;
  for (const auto& [k, v] : ck.meta)
    if (k.rfind("config.", 0) == 0) set_config_value(cfg, k.substr(7), v);
  cfg.validate();
  return cfg;
}

template <class T>
Model<T> from_checkpoint(const Checkpoint<T>& ck, const Catalog<T>& cat) {
  auto arm = parse_arm(ck.get("arm"));
  if (!arm) throw ParameterError("checkpoint: unknown arm '" + ck.get("arm") + "'");
  Model<T> m(*arm, config_from_checkpoint(ck), cat);
  ck.restore("low.", m.low->params());
  if (m.high) ck.restore("high.", m.high->params());
  return m;
}

// ---------------------------------------------------------------------------
// Item choice

// Removes and returns the lowest-id active item (the outcome of an all-tie
// scan, used when the virtual action is the zero vector).
template <class T>
ItemId take_lowest(ActiveItemSet<T>& active, std::span<const ItemId> candidates) {
  if (active.empty()) throw SessionExhaustedError("no active items left in the session");
  ItemId best = kNoItem;
  if (candidates.empty()) {
    const auto& cat = active.catalog();
    for (Index k = 0; k < cat.size() && best == kNoItem; ++k)
      if (active.contains_index(k)) best = cat.id_at(k);
  } else {
    for (ItemId id : candidates)
      if (active.contains(id) && (best == kNoItem || id < best)) best = id;
  }
  if (best == kNoItem) throw SessionExhaustedError("no active item among the candidates");
  active.remove(best);
  return best;
}

// Optional top-k prefilter by cosine to s^l (identity projection).
template <class T>
std::vector<ItemId> recall_for(const DualGruEncoder<T>& enc, const SessionState& state, const ActiveItemSet<T>& active,
                               int recall_k) {
  if (recall_k <= 0) return {};
  require_dims(enc.state_size() == active.catalog().dim(), "recall needs state_dim == item_dim");
  const Tensor1<T> s = encode_low(state.browse, state.click, enc, active.catalog());
  return recall_candidates(s, active, recall_k);
}

// LActor plus mapping. a_hat_out receives the virtual action.
template <class T>
ItemId actor_choose(const LowAgent<T>& agent, const SessionState& state, ActiveItemSet<T>& active, int recall_k,
                    double sigma, Rng* noise, Tensor1<T>* a_hat_out = nullptr) {
  const Tensor1<T> a_hat = agent.generate_action(state.browse, state.click, sigma, noise);
  if (a_hat_out) *a_hat_out = a_hat;
  const auto cand = recall_for(agent.params().actor.enc, state, active, recall_k);
  if (!(a_hat.norm() > T(0))) return take_lowest(active, std::span<const ItemId>(cand));
  return map_action(a_hat, active, std::span<const ItemId>(cand)).id;
}

// Predicted immediate reward of every catalog item in the current state.
template <class T>
Tensor1<T> critic_item_scores(const LowAgent<T>& agent, const SessionState& state) {
  const auto& c = agent.params().critic;
  const auto& cat = agent.catalog();
  const Tensor2<T> s = encode_low(state.browse, state.click, c.enc, cat);
  Tensor2<T> pre1 = c.head.Wx * (agent.config().direction_input ? cat.unit_norms() : cat.embeddings());
  pre1.colwise() += (c.head.Ws * s + c.head.b1).col(0);
  const Tensor2<T> hidden = pre1.cwiseMax(T(0));
  Tensor2<T> q = c.head.wq * hidden;
  q.array() += c.head.bq(0, 0);
  return q.cwiseMax(T(0)).row(0).transpose();
}

// Greedy argmax of predicted reward, ties to the lowest id; with
// probability epsilon a uniformly random active item instead.
template <class T>
ItemId dnn_choose(const LowAgent<T>& agent, const SessionState& state, ActiveItemSet<T>& active, int recall_k,
                  double epsilon = 0.0, Rng* rng = nullptr) {
  if (active.empty()) throw SessionExhaustedError("no active items left in the session");
  if (epsilon > 0.0) {
    if (!rng) throw ParameterError("dnn_choose: exploration requested without a generator");
    if (std::uniform_real_distribution<double>(0.0, 1.0)(*rng) < epsilon) {
      const auto items = active.items();
      const ItemId id = items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(*rng)];
      active.remove(id);
      return id;
    }
  }
  const auto& cat = agent.catalog();
  const Tensor1<T> scores = critic_item_scores(agent, state);
  const auto cand = recall_for(agent.params().critic.enc, state, active, recall_k);
  Index best = -1;
  auto consider = [&](Index k) {
    if (!active.contains_index(k)) return;
    if (best < 0 || scores[k] > scores[best] || (scores[k] == scores[best] && k < best)) best = k;
  };
  if (cand.empty())
    for (Index k = 0; k < cat.size(); ++k) consider(k);
  else
    for (ItemId id : cand) consider(cat.index_of(id));
  const ItemId id = cat.id_at(best);
  active.remove(id);
  return id;
}

// ---------------------------------------------------------------------------
// Traces

struct StepRecord {
  int session = 0;
  int t = 0;
  ItemId item = kNoItem;
  Feedback feedback = Feedback::Skip;
  double r_ex = 0, r_in = 0, r_low = 0;
  double action_norm = 0;  // |a_hat| (0 for Dnn)
  double goal_norm = 0;    // |g^j| of the active goal
  std::uint64_t goal_hash = 0;  // hash of the bits of g^{1:M}
  int high_push = 0;       // high-level transitions stored at this step
  int low_updates = 0, high_updates = 0;
  int target_updates = 0;  // target networks soft-updated at this step
  double low_loss = 0, low_q = 0, high_loss = 0;
  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct SessionSummary {
  int session = 0;
  int steps = 0;
  double reward = 0;
  int clicks = 0, orders = 0;  // orders are not counted as clicks
  int low_transitions = 0, high_transitions = 0;
  bool left = false;
  friend bool operator==(const SessionSummary&, const SessionSummary&) = default;
};

struct TrainTrace {
  std::vector<StepRecord> steps;
  std::vector<SessionSummary> sessions;
  friend bool operator==(const TrainTrace&, const TrainTrace&) = default;
};

inline constexpr const char* kStepCsvHeader =
    "session,t,item,feedback,r_ex,r_in,r_low,action_norm,goal_norm,goal_hash,high_push,low_updates,high_updates,"
    "target_updates,low_loss,low_q,high_loss";
inline constexpr const char* kSessionCsvHeader =
    "session,steps,reward,clicks,orders,low_transitions,high_transitions,left";

inline std::string steps_csv(const TrainTrace& tr) {
  std::ostringstream os;
  os << kStepCsvHeader << '\n';
  for (const auto& s : tr.steps)
    os << s.session << ',' << s.t << ',' << s.item << ',' << to_string(s.feedback) << ',' << io::format_real(s.r_ex) << ','
       << io::format_real(s.r_in) << ',' << io::format_real(s.r_low) << ',' << io::format_real(s.action_norm) << ','
       << io::format_real(s.goal_norm) << ',' << s.goal_hash << ',' << s.high_push << ',' << s.low_updates << ','
       << s.high_updates << ',' << s.target_updates << ',' << io::format_real(s.low_loss) << ','
       << io::format_real(s.low_q) << ',' << io::format_real(s.high_loss) << '\n';
  return os.str();
}

inline std::string sessions_csv(const TrainTrace& tr) {
  std::ostringstream os;
  os << kSessionCsvHeader << '\n';
  for (const auto& s : tr.sessions)
    os << s.session << ',' << s.steps << ',' << io::format_real(s.reward) << ',' << s.clicks << ',' << s.orders << ','
       << s.low_transitions << ',' << s.high_transitions << ',' << (s.left ? 1 : 0) << '\n';
  return os.str();
}

template <class T>
std::uint64_t tensor_hash(const Tensor2<T>& m) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(m.size()) * sizeof(T); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

// Exploration sigma for training session g of G, linear from start to end
// (both scaled by B).
inline double noise_sigma(const TrainConfig& cfg, int g) {
  const double frac = cfg.sessions > 1 ? static_cast<double>(g) / static_cast<double>(cfg.sessions - 1) : 0.0;
  return cfg.shape.bound * (cfg.noise_start + (cfg.noise_end - cfg.noise_start) * frac);
}

// ---------------------------------------------------------------------------
// Training

template <class T>
struct TrainResult {
  Model<T> model;
  TrainTrace trace;
};

// Session g of the run uses environment key g and its own bootstrap stream.
// Each component draws from a separate stream, so an arm without a high
// level consumes the low-level streams exactly as an arm with one.
template <class T>
TrainResult<T> run_training(const TrainConfig& cfg, Arm arm, const Catalog<T>& cat, Environment<T>& env) {
  cfg.validate();
  TrainResult<T> res{Model<T>(arm, cfg, cat), {}};
  LowAgent<T>& low = *res.model.low;
  HighAgent<T>* high = res.model.high.get();
  const int c = cfg.period;
  const int M = high ? high->goal_count() : 0;

  ReplayBuffer<LowTransition<T>> low_buf(cfg.low_capacity);
  std::optional<ReplayBuffer<HighTransition<T>>> high_buf;
  if (high) high_buf.emplace(cfg.high_capacity);
  Rng low_noise = stream_rng(cfg.seed, "low.noise");
  Rng low_replay = stream_rng(cfg.seed, "low.replay");
  Rng high_noise = stream_rng(cfg.seed, "high.noise");
  Rng high_replay = stream_rng(cfg.seed, "high.replay");
  const std::size_t low_warm = std::max(cfg.low_batch, cfg.warmup_samples);
  const auto window = static_cast<std::size_t>(cfg.shape.window);
  std::uint64_t global_step = 0;

  for (int g = 0; g < cfg.sessions; ++g) {
    env.reset(static_cast<std::uint64_t>(g));
    Rng boot = stream_rng(cfg.seed, "train.bootstrap", static_cast<std::uint64_t>(g));
    SessionState state = bootstrap_session(env, cat, window, static_cast<std::size_t>(cfg.warmup_interactions), boot);
    ActiveItemSet<T> active(cat);
    const double sigma = noise_sigma(cfg, g);
    Rng dnn_explore = stream_rng(cfg.seed, "dnn.explore", static_cast<std::uint64_t>(g));

    SessionSummary sum;
    sum.session = g;
    Tensor2<T> goals;
    SessionState period_start;
    std::vector<T> period_rewards;

    auto push_high = [&](const SessionState& next, bool terminal) {
      HighTransition<T> tr{period_start.click, period_start.order, goals, period_rewards, next.click, next.order, terminal};
      high_buf->push(std::move(tr));
      ++sum.high_transitions;
    };

    for (int t = 0; t < cfg.session_length && !active.empty(); ++t) {
      StepRecord rec;
      rec.session = g;
      rec.t = t;
      const int step_in_period = t % c;
      if (high && step_in_period == 0) {
        if (t > 0) {
          push_high(state, false);
          rec.high_push = 1;
        }
        goals = high->generate_goals(state.click, state.order, sigma, &high_noise);
        period_start = state;
        period_rewards.clear();
      }

      ItemId item;
      Tensor1<T> a_hat;
      if (arm == Arm::Dnn) {
        item = dnn_choose(low, state, active, cfg.recall_k, cfg.dnn_epsilon, &dnn_explore);
      } else {
        item = actor_choose(low, state, active, cfg.recall_k, sigma, &low_noise, &a_hat);
        rec.action_norm = static_cast<double>(a_hat.norm());
      }
      const StepOutcome out = env.step(item, state);
      const T r_ex = static_cast<T>(out.reward);
      T r_in = T(0);
      if (high) {
        r_in = internal_reward<T>(goals, cat.embedding(item), step_in_period, c);
        rec.goal_norm = static_cast<double>(goals.col(stage_goal(step_in_period, c, M)).norm());
        rec.goal_hash = tensor_hash(goals);
      }
      rec.item = item;
      rec.feedback = out.feedback;
      rec.r_ex = out.reward;
      rec.r_in = static_cast<double>(r_in);
      rec.r_low = static_cast<double>(total_reward(r_ex, r_in, low.config().alpha));

      SessionState next = state;
      update_histories(next, item, out.feedback);
      const bool left = out.feedback == Feedback::Leave;
      LowTransition<T> ltr{state.browse, state.click, high ? goals : Tensor2<T>(), item, r_ex,
                           next.browse, next.click, step_in_period, left};
      low_buf.push(std::move(ltr));
      ++sum.low_transitions;
      if (high) period_rewards.push_back(r_ex);

      ++sum.steps;
      sum.reward += out.reward;
      if (out.feedback == Feedback::Click) ++sum.clicks;
      if (out.feedback == Feedback::Order) ++sum.orders;
      state = std::move(next);

      ++global_step;
      if (global_step % static_cast<std::uint64_t>(cfg.update_every) == 0) {
        if (low_buf.size() >= low_warm) {
          const auto batch = low_buf.sample(cfg.low_batch, low_replay);
          auto b = low.prepare(batch);
          rec.low_loss = static_cast<double>(low.critic_update(b));
          rec.low_q = static_cast<double>(low.last_q_mean());
          if (arm != Arm::Dnn) {
            low.actor_update(b);
            low.soft_update_targets(cfg.tau);
            rec.target_updates += 2;
          }
          rec.low_updates = 1;
        }
        if (high && high_buf->size() >= cfg.high_batch) {
          const auto batch = high_buf->sample(cfg.high_batch, high_replay);
          rec.high_loss = static_cast<double>(high->update_round(batch).critic_loss);
          high->soft_update_targets(cfg.tau);
          rec.target_updates += 2;
          rec.high_updates = 1;
        }
      }
      res.trace.steps.push_back(rec);
      if (left) {
        sum.left = true;
        break;
      }
    }
    // Final (possibly partial) period.
    if (high && !period_rewards.empty()) {
      push_high(state, sum.left);
      res.trace.steps.back().high_push += 1;
    }
    res.trace.sessions.push_back(sum);
  }
  return res;
}

}  // namespace hrlmg
