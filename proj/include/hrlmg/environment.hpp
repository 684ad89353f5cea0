#pragma once

// Session environment: a ground-truth synthetic user, session-state
// bookkeeping, log generation/ingestion and a learned feedback simulator.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "hrlmg/catalog.hpp"
#include "hrlmg/encoders.hpp"
#include "hrlmg/errors.hpp"
#include "hrlmg/io.hpp"
#include "hrlmg/numerics.hpp"
#include "hrlmg/rng.hpp"

namespace hrlmg {

enum class Feedback { Skip, Click, Order, Leave };

inline double feedback_reward(Feedback f) {
  switch (f) {
    case Feedback::Click: return 1.0;
    case Feedback::Order: return 5.0;
    case Feedback::Skip:
    case Feedback::Leave: return 0.0;
  }
  return 0.0;
}

inline const char* to_string(Feedback f) {
  switch (f) {
    case Feedback::Skip: return "skip";
    case Feedback::Click: return "click";
    case Feedback::Order: return "order";
    case Feedback::Leave: return "leave";
  }
  return "?";
}

inline std::optional<Feedback> parse_feedback(std::string_view s) {
  if (s == "skip") return Feedback::Skip;
  if (s == "click") return Feedback::Click;
  if (s == "order") return Feedback::Order;
  if (s == "leave") return Feedback::Leave;
  return std::nullopt;
}

// Browse always records the item; click on Click or Order; order on Order.
inline void update_histories(SessionState& state, ItemId item, Feedback f) {
  state.browse.push(item);
  if (f == Feedback::Click || f == Feedback::Order) state.click.push(item);
  if (f == Feedback::Order) state.order.push(item);
}

struct StepOutcome {
  Feedback feedback = Feedback::Skip;
  double reward = 0.0;
};

// Knobs of the synthetic user. Click probability is sigmoid(kappa_c s + b_c)
// with s the cosine to the click taste p; given a click, order probability
// is sigmoid(kappa_o s_o + b_o + intent_gain z) where s_o is the cosine to
// the purchase taste and z the purchase intent built up by clicks.
struct UserModelConfig {
  double kappa_c = 4.0;
  double bias_c = -2.0;
  double kappa_o = 4.0;
  double bias_o = -6.0;
  double intent_gain = 1.0;
  double intent_cap = 4.0;
  double drift = 0.05;         // eta: pull of p toward ordered items
  double taste_mix = 0.5;      // weight of the purchase cluster inside p
  double taste_noise = 0.2;    // persona jitter around the cluster centers
  double leave_base = 0.0;
  double leave_slope = 0.005;  // per consecutive skip
  double leave_cap = 0.2;
};

// Unit-norm mean direction of every cluster (d x K, double).
template <class T>
Eigen::MatrixXd cluster_centers(const Catalog<T>& cat) {
  if (!cat.has_clusters()) throw ParameterError("catalog carries no cluster labels");
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(cat.dim(), cat.cluster_count());
  for (Index k = 0; k < cat.size(); ++k) c.col(*cat.cluster_of(cat.id_at(k))) += cat.unit_norms().col(k).template cast<double>();
  for (Index j = 0; j < c.cols(); ++j) {
    const double n = c.col(j).norm();
    if (n > 0) c.col(j) /= n;
  }
  return c;
}

template <class T>
class SyntheticUser {
 public:
  SyntheticUser(const Catalog<T>& catalog, const UserModelConfig& cfg, Eigen::VectorXd taste, Eigen::VectorXd purchase,
                std::uint64_t seed)
      : cat_(&catalog), cfg_(cfg), p_(std::move(taste)), p_o_(std::move(purchase)), rng_(seed) {
    require_dims(p_.size() == catalog.dim() && p_o_.size() == catalog.dim(), "synthetic user: taste dimension");
    if (!(p_.norm() > 0) || !(p_o_.norm() > 0)) throw DegenerateVectorError("synthetic user: zero taste vector");
    p_.normalize();
    p_o_.normalize();
  }

  // Persona: a click cluster A and a different purchase cluster B. The click
  // taste leans toward B by taste_mix, the purchase taste sits on B.
  static SyntheticUser sample(const Catalog<T>& catalog, const UserModelConfig& cfg, Rng& persona, std::uint64_t seed) {
    const Index d = catalog.dim();
    std::normal_distribution<double> normal(0.0, 1.0);
    auto jitter = [&]() -> Eigen::VectorXd {
      Eigen::VectorXd v(d);
      for (Index j = 0; j < d; ++j) v[j] = normal(persona);
      return v * (cfg.taste_noise / std::sqrt(static_cast<double>(d)));
    };
    Eigen::VectorXd a, b;
    if (catalog.has_clusters() && catalog.cluster_count() >= 2) {
      const Eigen::MatrixXd centers = cluster_centers(catalog);
      const int k = catalog.cluster_count();
      std::uniform_int_distribution<int> pick(0, k - 1);
      std::uniform_int_distribution<int> offset(1, k - 1);
      const int ca = pick(persona);
      const int cb = (ca + offset(persona)) % k;
      a = centers.col(ca);
      b = centers.col(cb);
    } else {
      std::uniform_int_distribution<Index> pick(0, catalog.size() - 1);
      a = catalog.unit_norms().col(pick(persona)).template cast<double>();
      b = catalog.unit_norms().col(pick(persona)).template cast<double>();
    }
    Eigen::VectorXd p = a + cfg.taste_mix * b + jitter();
    Eigen::VectorXd po = b + jitter();
    return SyntheticUser(catalog, cfg, std::move(p), std::move(po), seed);
  }

  const UserModelConfig& config() const { return cfg_; }
  const Eigen::VectorXd& preference() const { return p_; }
  const Eigen::VectorXd& purchase_taste() const { return p_o_; }
  double intent() const { return intent_; }
  int consecutive_skips() const { return skips_; }
  bool terminated() const { return left_; }

  double click_probability(ItemId item) const {
    return sigmoid(cfg_.kappa_c * unit(item).dot(p_) + cfg_.bias_c);
  }
  double order_probability(ItemId item) const {
    return sigmoid(cfg_.kappa_o * unit(item).dot(p_o_) + cfg_.bias_o + cfg_.intent_gain * intent_);
  }
  double leave_probability() const {
    return std::min(cfg_.leave_cap, cfg_.leave_base + cfg_.leave_slope * static_cast<double>(skips_));
  }

  // allow_leave=false is used for warm-up interactions.
  StepOutcome step(ItemId item, bool allow_leave = true) {
    if (left_) throw SessionTerminatedError("synthetic user: session already ended");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    // Draw all three uniforms every step so the stream position does not
    // depend on the outcome.
    const double u_leave = u(rng_), u_click = u(rng_), u_order = u(rng_);
    if (allow_leave && u_leave < leave_probability()) {
      left_ = true;
      return {Feedback::Leave, 0.0};
    }
    const Eigen::VectorXd x = unit(item);
    Feedback f = Feedback::Skip;
    if (u_click < click_probability(item)) f = u_order < order_probability(item) ? Feedback::Order : Feedback::Click;
    if (f == Feedback::Skip) {
      ++skips_;
    } else {
      skips_ = 0;
      intent_ = std::min(cfg_.intent_cap, intent_ + std::max(0.0, x.dot(p_o_)));
    }
    if (f == Feedback::Order) {
      intent_ = 0.0;
      p_ += cfg_.drift * x;
      p_.normalize();
    }
    return {f, feedback_reward(f)};
  }

 private:
  Eigen::VectorXd unit(ItemId item) const { return cat_->unit_norm(item).template cast<double>(); }

  const Catalog<T>* cat_;
  UserModelConfig cfg_;
  Eigen::VectorXd p_, p_o_;
  Rng rng_;
  double intent_ = 0.0;
  int skips_ = 0;
  bool left_ = false;
};

// One interactive session source. reset(key) starts a fresh, fully
// determined session for that key.
template <class T>
class Environment {
 public:
  virtual ~Environment() = default;
  virtual void reset(std::uint64_t key) = 0;
  virtual StepOutcome step(ItemId item, const SessionState& state, bool allow_leave = true) = 0;
  virtual bool live() const = 0;
};

template <class T>
class SyntheticEnvironment final : public Environment<T> {
 public:
  SyntheticEnvironment(const Catalog<T>& catalog, UserModelConfig cfg, std::uint64_t seed, std::string label = "env")
      : cat_(&catalog), cfg_(cfg), seed_(seed), label_(std::move(label)) {}

  void reset(std::uint64_t key) override {
    Rng persona = stream_rng(seed_, label_ + ".persona", key);
    const std::uint64_t user_seed = stream_rng(seed_, label_ + ".user", key)();
    user_ = std::make_unique<SyntheticUser<T>>(SyntheticUser<T>::sample(*cat_, cfg_, persona, user_seed));
  }

  StepOutcome step(ItemId item, const SessionState&, bool allow_leave = true) override {
    if (!user_) throw SessionTerminatedError("environment: no session started");
    return user_->step(item, allow_leave);
  }

  bool live() const override { return user_ && !user_->terminated(); }
  const SyntheticUser<T>& user() const { return *user_; }

 private:
  const Catalog<T>* cat_;
  UserModelConfig cfg_;
  std::uint64_t seed_;
  std::string label_;
  std::unique_ptr<SyntheticUser<T>> user_;
};

// Fills the windows with `count` warm-up interactions on uniformly random
// catalog items. Leave is disabled during warm-up.
template <class T>
SessionState bootstrap_session(Environment<T>& env, const Catalog<T>& cat, std::size_t window, std::size_t count, Rng& rng) {
  SessionState state(window);
  std::uniform_int_distribution<Index> pick(0, cat.size() - 1);
  for (std::size_t i = 0; i < count; ++i) {
    const ItemId item = cat.id_at(pick(rng));
    const StepOutcome out = env.step(item, state, false);
    update_histories(state, item, out.feedback);
  }
  return state;
}

// ---------------------------------------------------------------------------
// Logs

struct LogEvent {
  std::int64_t t = 0;
  ItemId item = kNoItem;
  Feedback feedback = Feedback::Skip;
  friend bool operator==(const LogEvent&, const LogEvent&) = default;
};

struct SessionRecord {
  std::int64_t session_id = 0;
  std::vector<LogEvent> events;
  friend bool operator==(const SessionRecord&, const SessionRecord&) = default;
};

enum class LoggingPolicy { Random, Mixed };

inline std::optional<LoggingPolicy> parse_logging_policy(std::string_view s) {
  if (s == "random") return LoggingPolicy::Random;
  if (s == "mixed") return LoggingPolicy::Mixed;
  return std::nullopt;
}

struct LogConfig {
  std::size_t session_length = 20;
  LoggingPolicy policy = LoggingPolicy::Random;
  double mixed_greedy = 0.7;  // Mixed: chance of showing one of the user's top items
  Index mixed_pool = 20;
  UserModelConfig user;
};

// Sessions start from empty histories. Under Mixed the logger sometimes
// shows one of the mixed_pool items closest to the user's click taste, the
// rest of the time a uniformly random unseen item.
template <class T>
std::vector<SessionRecord> generate_logs(std::size_t n_sessions, const Catalog<T>& cat, const LogConfig& cfg,
                                         std::uint64_t seed) {
  std::vector<SessionRecord> out;
  out.reserve(n_sessions);
  SyntheticEnvironment<T> env(cat, cfg.user, seed, "logs");
  for (std::size_t s = 0; s < n_sessions; ++s) {
    env.reset(s);
    Rng policy = stream_rng(seed, "logs.policy", s);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SessionRecord rec;
    rec.session_id = static_cast<std::int64_t>(s);
    ActiveItemSet<T> active(cat);
    SessionState state(1);
    std::vector<ItemId> top;
    if (cfg.policy == LoggingPolicy::Mixed) {
      const Tensor1<T> query = env.user().preference().template cast<T>();
      top = recall_candidates(query, active, cfg.mixed_pool);
    }
    for (std::size_t t = 0; t < cfg.session_length && !active.empty(); ++t) {
      ItemId item = kNoItem;
      if (cfg.policy == LoggingPolicy::Mixed && u(policy) < cfg.mixed_greedy) {
        std::vector<ItemId> avail;
        for (ItemId id : top)
          if (active.contains(id)) avail.push_back(id);
        if (!avail.empty()) item = avail[std::uniform_int_distribution<std::size_t>(0, avail.size() - 1)(policy)];
      }
      if (item == kNoItem) {
        const auto rest = active.items();
        item = rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(policy)];
      }
      active.remove(item);
      const StepOutcome o = env.step(item, state);
      rec.events.push_back({static_cast<std::int64_t>(t), item, o.feedback});
      if (o.feedback == Feedback::Leave) break;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::string format_logs(const std::vector<SessionRecord>& logs) {
  std::string out;
  for (const auto& s : logs)
    for (const auto& e : s.events) {
      out += std::to_string(s.session_id);
      out += '\t';
      out += std::to_string(e.t);
      out += '\t';
      out += std::to_string(e.item);
      out += '\t';
      out += to_string(e.feedback);
      out += '\n';
    }
  return out;
}

inline void save_logs(const std::vector<SessionRecord>& logs, const std::filesystem::path& path) {
  io::write_file_atomic(path, format_logs(logs));
}

// Lines of one session must be contiguous, with nondecreasing timestamps and
// at most one terminal leave.
inline std::vector<SessionRecord> parse_logs(std::string_view text) {
  std::vector<SessionRecord> out;
  std::map<std::int64_t, std::size_t> seen;
  std::size_t lineno = 0;
  for (auto raw : io::split(text, '\n')) {
    ++lineno;
    auto line = io::trim(raw);
    if (line.empty()) continue;
    auto f = io::split(line, '\t');
    if (f.size() != 4) throw ParseError(lineno, "expected 4 tab-separated fields, got " + std::to_string(f.size()));
    auto sid = io::parse_number<long long>(io::trim(f[0]));
    auto t = io::parse_number<long long>(io::trim(f[1]));
    auto item = io::parse_number<long long>(io::trim(f[2]));
    auto fb = parse_feedback(io::trim(f[3]));
    if (!sid) throw ParseError(lineno, "invalid session id");
    if (!t) throw ParseError(lineno, "invalid timestamp");
    if (!item || *item < 0) throw ParseError(lineno, "invalid item id");
    if (!fb) throw ParseError(lineno, "unknown feedback '" + std::string(io::trim(f[3])) + "'");
    if (out.empty() || out.back().session_id != *sid) {
      if (seen.count(*sid)) throw ParseError(lineno, "session " + std::to_string(*sid) + " is not contiguous");
      seen.emplace(*sid, out.size());
      out.push_back(SessionRecord{*sid, {}});
    }
    auto& rec = out.back();
    if (!rec.events.empty()) {
      if (rec.events.back().feedback == Feedback::Leave) throw ParseError(lineno, "event after leave");
      if (*t < rec.events.back().t) throw ParseError(lineno, "timestamps must be nondecreasing");
    }
    rec.events.push_back({*t, static_cast<ItemId>(*item), *fb});
  }
  return out;
}

inline std::vector<SessionRecord> ingest_logs(const std::filesystem::path& path) {
  return parse_logs(io::read_file(path));
}

// ---------------------------------------------------------------------------
// Learned simulator: the low-level critic's shape with a 3-way softmax over
// {skip, click, order}.

inline constexpr int kFeedbackClasses = 3;

template <class T>
struct SimulatorNet {
  using Scalar = T;
  DualGruEncoder<T> enc;
  Tensor2<T> Ws, Wx, b1;  // hidden layer over (s^l, item)
  Tensor2<T> Wo, bo;      // 3 x K logits

  SimulatorNet() = default;
  explicit SimulatorNet(const NetworkShape& s)
      : enc(s.item_dim, s.hidden, s.state_dim), Ws(Tensor2<T>::Zero(s.critic_hidden, s.state_dim)),
        Wx(Tensor2<T>::Zero(s.critic_hidden, s.item_dim)), b1(Tensor2<T>::Zero(s.critic_hidden, 1)),
        Wo(Tensor2<T>::Zero(kFeedbackClasses, s.critic_hidden)), bo(Tensor2<T>::Zero(kFeedbackClasses, 1)) {}

  void init_uniform(Rng& rng) {
    enc.init_uniform(rng);
    const double l1 = 1.0 / std::sqrt(static_cast<double>(Ws.cols() + Wx.cols()));
    fill_uniform(Ws, l1, rng);
    fill_uniform(Wx, l1, rng);
    fill_uniform(b1, l1, rng);
    fill_uniform(Wo, 1.0 / std::sqrt(static_cast<double>(Wo.cols())), rng);
  }

  template <class Self, class F>
  static void visit(Self& s, F&& f) {
    visit_prefixed("enc.", s.enc, f);
    f("Ws", s.Ws);
    f("Wx", s.Wx);
    f("b1", s.b1);
    f("Wo", s.Wo);
    f("bo", s.bo);
  }
};

template <class T>
struct SimulatorCache {
  EncoderCache<T> enc;
  Tensor2<T> s, x, pre1, hidden, probs;
};

// Column-wise softmax probabilities (3 x B).
template <class T>
Tensor2<T> simulator_forward(const SimulatorNet<T>& p, const EncoderInput<T>& in, const Tensor2<T>& items,
                             SimulatorCache<T>* cache = nullptr) {
  EncoderCache<T> ec;
  Tensor2<T> s = encode(p.enc, in, ec);
  require_dims(items.rows() == p.Wx.cols() && items.cols() == s.cols(), "simulator: item batch shape");
  Tensor2<T> pre1 = p.Ws * s;
  pre1.noalias() += p.Wx * items;
  pre1.colwise() += p.b1.col(0);
  Tensor2<T> hidden = pre1.cwiseMax(T(0));
  Tensor2<T> logits = p.Wo * hidden;
  logits.colwise() += p.bo.col(0);
  Tensor2<T> probs(logits.rows(), logits.cols());
  for (Index j = 0; j < logits.cols(); ++j) {
    const auto col = logits.col(j);
    const T m = col.maxCoeff();
    Tensor1<T> e = (col.array() - m).exp().matrix();
    probs.col(j) = e / e.sum();
  }
  if (cache) *cache = SimulatorCache<T>{std::move(ec), std::move(s), items, std::move(pre1), std::move(hidden), probs};
  return probs;
}

// Mean cross-entropy over the batch.
template <class T>
T simulator_loss(const Tensor2<T>& probs, std::span<const int> labels) {
  require_dims(static_cast<Index>(labels.size()) == probs.cols(), "simulator: label count");
  T loss = T(0);
  for (Index j = 0; j < probs.cols(); ++j)
    loss -= std::log(std::max(probs(labels[static_cast<std::size_t>(j)], j), std::numeric_limits<T>::min()));
  return loss / static_cast<T>(probs.cols());
}

// Accumulates d(mean cross-entropy)/d(params) into grads.
template <class T>
void simulator_backward(const SimulatorNet<T>& p, const SimulatorCache<T>& c, std::span<const int> labels,
                        SimulatorNet<T>& grads) {
  const Index B = c.probs.cols();
  Tensor2<T> dlogits = c.probs;
  for (Index j = 0; j < B; ++j) dlogits(labels[static_cast<std::size_t>(j)], j) -= T(1);
  dlogits /= static_cast<T>(B);
  grads.Wo.noalias() += dlogits * c.hidden.transpose();
  grads.bo += dlogits.rowwise().sum();
  const Tensor2<T> dhidden = p.Wo.transpose() * dlogits;
  const Tensor2<T> dpre1 = (dhidden.array() * (c.pre1.array() > T(0)).template cast<T>()).matrix();
  grads.Ws.noalias() += dpre1 * c.s.transpose();
  grads.Wx.noalias() += dpre1 * c.x.transpose();
  grads.b1 += dpre1.rowwise().sum();
  const Tensor2<T> ds = p.Ws.transpose() * dpre1;
  encode_backward(p.enc, c.enc, ds, grads.enc);
}

inline int feedback_class(Feedback f) {
  switch (f) {
    case Feedback::Skip: return 0;
    case Feedback::Click: return 1;
    case Feedback::Order: return 2;
    case Feedback::Leave: break;
  }
  throw ParameterError("leave has no feedback class");
}

inline Feedback class_feedback(int k) {
  static constexpr Feedback table[] = {Feedback::Skip, Feedback::Click, Feedback::Order};
  if (k < 0 || k >= kFeedbackClasses) throw ParameterError("feedback class out of range");
  return table[k];
}

// One supervised example: the (browse, click) windows before the event.
struct SimulatorExample {
  HistoryWindow browse, click;
  ItemId item = kNoItem;
  int label = 0;
};

// Replays each session from empty windows. Leave events carry no feedback
// class and are dropped.
inline std::vector<SimulatorExample> simulator_examples(const std::vector<SessionRecord>& logs, std::size_t window) {
  std::vector<SimulatorExample> out;
  for (const auto& rec : logs) {
    SessionState state(window);
    for (const auto& e : rec.events) {
      if (e.feedback == Feedback::Leave) break;
      out.push_back({state.browse, state.click, e.item, feedback_class(e.feedback)});
      update_histories(state, e.item, e.feedback);
    }
  }
  return out;
}

template <class T>
class LearnedSimulator {
 public:
  LearnedSimulator() = default;
  LearnedSimulator(const NetworkShape& shape, const Catalog<T>& catalog) : shape_(shape), cat_(&catalog), net_(shape) {
    require_dims(catalog.dim() == shape.item_dim, "simulator: catalog dimension != item_dim");
  }

  const NetworkShape& shape() const { return shape_; }
  SimulatorNet<T>& net() { return net_; }
  const SimulatorNet<T>& net() const { return net_; }
  const Catalog<T>& catalog() const { return *cat_; }

  std::array<T, kFeedbackClasses> probabilities(const HistoryWindow& browse, const HistoryWindow& click, ItemId item) const {
    const HistoryWindow* b[] = {&browse};
    const HistoryWindow* c[] = {&click};
    const auto in = make_encoder_input<T>(*cat_, b, c, shape_.window);
    const Tensor2<T> x = cat_->embedding(item);
    const Tensor2<T> p = simulator_forward(net_, in, x);
    return {p(0, 0), p(1, 0), p(2, 0)};
  }

  Tensor2<T> probabilities(std::span<const SimulatorExample* const> batch) const {
    auto [in, x] = inputs(batch);
    return simulator_forward(net_, in, x);
  }

  std::pair<EncoderInput<T>, Tensor2<T>> inputs(std::span<const SimulatorExample* const> batch) const {
    std::vector<const HistoryWindow*> b, c;
    Tensor2<T> x(shape_.item_dim, static_cast<Index>(batch.size()));
    for (std::size_t k = 0; k < batch.size(); ++k) {
      b.push_back(&batch[k]->browse);
      c.push_back(&batch[k]->click);
      x.col(static_cast<Index>(k)) = cat_->embedding(batch[k]->item);
    }
    return {make_encoder_input<T>(*cat_, b, c, shape_.window), std::move(x)};
  }

 private:
  NetworkShape shape_;
  const Catalog<T>* cat_ = nullptr;
  SimulatorNet<T> net_;
};

struct SimulatorTrainConfig {
  int epochs = 3;
  std::size_t batch = 64;
  double lr = 1e-3;
  double holdout = 0.2;  // fraction of sessions held out
};

struct SimulatorReport {
  double accuracy = 0.0;  // held-out
  double majority_baseline = 0.0;  // held-out accuracy of the most frequent training class
  std::array<double, kFeedbackClasses> precision{};  // NaN when a class is never predicted
  std::array<std::size_t, kFeedbackClasses> train_counts{};
  std::size_t train_examples = 0, test_examples = 0;
  bool degenerate = false;  // training labels contain a single class
  std::vector<double> epoch_loss;
};

template <class T>
SimulatorReport evaluate_simulator(const LearnedSimulator<T>& sim, const std::vector<SimulatorExample>& test,
                                   int majority_class, std::size_t batch = 256) {
  SimulatorReport r;
  std::array<std::size_t, kFeedbackClasses> predicted{}, correct_pred{};
  std::size_t correct = 0, majority_hits = 0;
  for (std::size_t start = 0; start < test.size(); start += batch) {
    const std::size_t end = std::min(test.size(), start + batch);
    std::vector<const SimulatorExample*> ptrs;
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&test[i]);
    const Tensor2<T> probs = sim.probabilities(ptrs);
    for (std::size_t i = 0; i < ptrs.size(); ++i) {
      Index k = 0;
      probs.col(static_cast<Index>(i)).maxCoeff(&k);
      ++predicted[static_cast<std::size_t>(k)];
      if (k == ptrs[i]->label) {
        ++correct;
        ++correct_pred[static_cast<std::size_t>(k)];
      }
      if (ptrs[i]->label == majority_class) ++majority_hits;
    }
  }
  r.test_examples = test.size();
  if (!test.empty()) {
    r.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    r.majority_baseline = static_cast<double>(majority_hits) / static_cast<double>(test.size());
  }
  for (std::size_t k = 0; k < kFeedbackClasses; ++k)
    r.precision[k] = predicted[k] ? static_cast<double>(correct_pred[k]) / static_cast<double>(predicted[k])
                                  : std::numeric_limits<double>::quiet_NaN();
  return r;
}

// Session-level hold-out split, Adam on mean cross-entropy.
template <class T>
std::pair<LearnedSimulator<T>, SimulatorReport> train_simulator(const std::vector<SessionRecord>& logs,
                                                                const Catalog<T>& catalog, const NetworkShape& shape,
                                                                const SimulatorTrainConfig& cfg, std::uint64_t seed,
                                                                std::ostream* warn = nullptr) {
  if (logs.empty()) throw ParameterError("train_simulator: no logs");
  if (!(cfg.holdout >= 0.0 && cfg.holdout < 1.0)) throw ParameterError("train_simulator: holdout must lie in [0, 1)");
  std::vector<std::size_t> order(logs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng = stream_rng(seed, "simulator.split");
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_test = static_cast<std::size_t>(std::floor(cfg.holdout * static_cast<double>(logs.size())));
  std::vector<SessionRecord> train_logs, test_logs;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_test ? test_logs : train_logs).push_back(logs[order[i]]);
  const auto window = static_cast<std::size_t>(shape.window);
  const auto train = simulator_examples(train_logs, window);
  const auto test = simulator_examples(test_logs, window);
  if (train.empty()) throw ParameterError("train_simulator: no usable training events");

  LearnedSimulator<T> sim(shape, catalog);
  Rng init = stream_rng(seed, "simulator.init");
  sim.net().init_uniform(init);
  std::array<std::size_t, kFeedbackClasses> counts{};
  for (const auto& e : train) ++counts[static_cast<std::size_t>(e.label)];
  const int majority = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  const bool degenerate = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) == 1;
  if (degenerate && warn)
    *warn << "warning: simulator logs contain a single feedback class (" << to_string(class_feedback(majority))
          << "); the model degenerates to a constant predictor\n";

  // Output bias starts at the smoothed log class priors.
  for (std::size_t k = 0; k < kFeedbackClasses; ++k)
    sim.net().bo(static_cast<Index>(k), 0) = static_cast<T>(
        std::log((static_cast<double>(counts[k]) + 0.5) / (static_cast<double>(train.size()) + 1.5)));

  Optimizer<T> opt(OptimizerKind::Adam);
  Rng shuffle_rng = stream_rng(seed, "simulator.shuffle");
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<double> epoch_loss;
  for (int ep = 0; ep < cfg.epochs; ++ep) {
    std::shuffle(idx.begin(), idx.end(), shuffle_rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < idx.size(); start += cfg.batch) {
      const std::size_t end = std::min(idx.size(), start + cfg.batch);
      std::vector<const SimulatorExample*> ptrs;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        ptrs.push_back(&train[idx[i]]);
        labels.push_back(train[idx[i]].label);
      }
      auto [in, x] = sim.inputs(ptrs);
      SimulatorCache<T> cache;
      const Tensor2<T> probs = simulator_forward(sim.net(), in, x, &cache);
      total += static_cast<double>(simulator_loss<T>(probs, labels));
      ++batches;
      SimulatorNet<T> grads = zeros_like(sim.net());
      simulator_backward(sim.net(), cache, labels, grads);
      std::vector<Binding<T>> bindings;
      bind_params("sim.", sim.net(), grads, bindings);
      opt.step(bindings, cfg.lr);
    }
    epoch_loss.push_back(total / static_cast<double>(std::max<std::size_t>(batches, 1)));
  }
  SimulatorReport rep = evaluate_simulator(sim, test, majority);
  rep.train_counts = counts;
  rep.train_examples = train.size();
  rep.degenerate = degenerate;
  rep.epoch_loss = std::move(epoch_loss);
  return {std::move(sim), std::move(rep)};
}

// Environment backed by a trained simulator: feedback is sampled from the
// predicted distribution. The simulator never predicts Leave.
template <class T>
class SimulatorEnvironment final : public Environment<T> {
 public:
  SimulatorEnvironment(const LearnedSimulator<T>& sim, std::uint64_t seed, std::string label = "simenv")
      : sim_(&sim), seed_(seed), label_(std::move(label)) {}

  void reset(std::uint64_t key) override {
    rng_ = stream_rng(seed_, label_, key);
    started_ = true;
  }

  StepOutcome step(ItemId item, const SessionState& state, bool = true) override {
    if (!started_) throw SessionTerminatedError("environment: no session started");
    const auto p = sim_->probabilities(state.browse, state.click, item);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    Feedback f = Feedback::Order;
    if (u < static_cast<double>(p[0]))
      f = Feedback::Skip;
    else if (u < static_cast<double>(p[0] + p[1]))
      f = Feedback::Click;
    return {f, feedback_reward(f)};
  }

  bool live() const override { return started_; }

 private:
  const LearnedSimulator<T>* sim_;
  std::uint64_t seed_;
  std::string label_;
  Rng rng_;
  bool started_ = false;
};

}  // namespace hrlmg
