#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace hrlmg;

namespace {

Catalog<double> small_catalog() { return generate_catalog<double>(200, 8, 5, 3); }

}  // namespace

TEST(Feedback, RewardMap) {
  EXPECT_EQ(feedback_reward(Feedback::Skip), 0.0);
  EXPECT_EQ(feedback_reward(Feedback::Click), 1.0);
  EXPECT_EQ(feedback_reward(Feedback::Order), 5.0);
  EXPECT_EQ(feedback_reward(Feedback::Leave), 0.0);
  for (auto f : {Feedback::Skip, Feedback::Click, Feedback::Order, Feedback::Leave})
    EXPECT_EQ(parse_feedback(to_string(f)), f);
  EXPECT_FALSE(parse_feedback("buy").has_value());
}

TEST(Histories, SkipTouchesOnlyBrowse) {
  SessionState s(10);
  update_histories(s, 3, Feedback::Skip);
  EXPECT_EQ(s.browse.items(), std::vector<ItemId>{3});
  EXPECT_TRUE(s.click.empty());
  EXPECT_TRUE(s.order.empty());
}

TEST(Histories, OrderTouchesAllWindows) {
  SessionState s(10);
  update_histories(s, 4, Feedback::Order);
  EXPECT_EQ(s.browse.items(), std::vector<ItemId>{4});
  EXPECT_EQ(s.click.items(), std::vector<ItemId>{4});
  EXPECT_EQ(s.order.items(), std::vector<ItemId>{4});
  update_histories(s, 5, Feedback::Click);
  EXPECT_EQ(s.click.size(), 2u);
  EXPECT_EQ(s.order.size(), 1u);
}

TEST(Histories, ElevenClicksKeepLastTen) {
  SessionState s(10);
  for (ItemId i = 0; i < 11; ++i) update_histories(s, i, Feedback::Click);
  ASSERT_EQ(s.click.size(), 10u);
  EXPECT_EQ(s.click.items().front(), 1);
  EXPECT_EQ(s.click.items().back(), 10);
}

TEST(SyntheticUserTest, SharpClickTemperatureNeverSkipsAlignedItems) {
  auto cat = small_catalog();
  UserModelConfig cfg;
  cfg.kappa_c = 1e6;
  cfg.leave_slope = 0.0;
  cfg.drift = 0.0;
  Eigen::VectorXd taste = cat.unit_norms().col(0).cast<double>();
  SyntheticUser<double> user(cat, cfg, taste, taste, 7);
  int tested = 0;
  for (ItemId id : cat.ids()) {
    if (cat.unit_norm(id).dot(cat.unit_norm(0)) <= 0.01) continue;
    const auto out = user.step(id);
    EXPECT_TRUE(out.feedback == Feedback::Click || out.feedback == Feedback::Order);
    EXPECT_EQ(out.reward, feedback_reward(out.feedback));
    ++tested;
  }
  EXPECT_GT(tested, 10);
}

TEST(SyntheticUserTest, ProbabilitiesFollowSigmoidModel) {
  auto cat = small_catalog();
  UserModelConfig cfg;
  Eigen::VectorXd taste = Eigen::VectorXd::Ones(8);
  Eigen::VectorXd buy = cat.unit_norms().col(5).cast<double>();
  SyntheticUser<double> user(cat, cfg, taste, buy, 1);
  for (ItemId id : {0, 17, 99}) {
    const double s = cat.unit_norm(id).dot(taste.normalized());
    EXPECT_NEAR(user.click_probability(id), 1.0 / (1.0 + std::exp(-(cfg.kappa_c * s + cfg.bias_c))), 1e-12);
    const double so = cat.unit_norm(id).dot(buy);
    EXPECT_NEAR(user.order_probability(id), 1.0 / (1.0 + std::exp(-(cfg.kappa_o * so + cfg.bias_o))), 1e-12);
  }
}

TEST(SyntheticUserTest, PreferenceStaysUnitNormUnderDrift) {
  auto cat = small_catalog();
  UserModelConfig cfg;
  cfg.kappa_c = 50;
  cfg.bias_o = 50;  // every click converts
  cfg.drift = 0.3;
  cfg.leave_slope = 0;
  Eigen::VectorXd taste = cat.unit_norms().col(1).cast<double>();
  SyntheticUser<double> user(cat, cfg, taste, taste, 3);
  int orders = 0;
  for (ItemId id = 0; id < 100; ++id) {
    if (user.step(id).feedback == Feedback::Order) ++orders;
    EXPECT_NEAR(user.preference().norm(), 1.0, 1e-12);
  }
  EXPECT_GT(orders, 5);
  EXPECT_GT((user.preference() - taste).norm(), 1e-3);
}

TEST(SyntheticUserTest, LeaveIsTerminal) {
  auto cat = small_catalog();
  UserModelConfig cfg;
  cfg.leave_base = 1.0;
  cfg.leave_cap = 1.0;
  SyntheticEnvironment<double> env(cat, cfg, 4);
  env.reset(0);
  SessionState s(10);
  EXPECT_EQ(env.step(0, s).feedback, Feedback::Leave);
  EXPECT_FALSE(env.live());
  EXPECT_THROW(env.step(1, s), SessionTerminatedError);
}

TEST(SyntheticUserTest, LeaveProbabilityGrowsWithSkipsUpToCap) {
  auto cat = small_catalog();
  UserModelConfig cfg;
  cfg.kappa_c = 0;
  cfg.bias_c = -1e3;  // always skip
  Eigen::VectorXd taste = Eigen::VectorXd::Ones(8);
  SyntheticUser<double> user(cat, cfg, taste, taste, 5);
  double last = user.leave_probability();
  for (int i = 0; i < 100; ++i) {
    user.step(i, false);
    EXPECT_GE(user.leave_probability(), last);
    last = user.leave_probability();
  }
  EXPECT_DOUBLE_EQ(last, cfg.leave_cap);
}

TEST(SyntheticEnvironmentTest, DeterministicGivenSeedAndActions) {
  auto cat = small_catalog();
  SyntheticEnvironment<double> a(cat, {}, 11, "train"), b(cat, {}, 11, "train");
  for (std::uint64_t key : {0u, 5u}) {
    a.reset(key);
    b.reset(key);
    SessionState s(10);
    for (ItemId i = 0; i < 40 && a.live(); ++i) {
      const auto x = a.step(i, s), y = b.step(i, s);
      EXPECT_EQ(x.feedback, y.feedback);
    }
  }
}

TEST(Logs, EmptyAndRoundTrip) {
  auto cat = small_catalog();
  EXPECT_TRUE(generate_logs(0, cat, LogConfig{}, 1).empty());
  LogConfig cfg;
  cfg.policy = LoggingPolicy::Mixed;
  const auto logs = generate_logs(50, cat, cfg, 2);
  EXPECT_EQ(parse_logs(format_logs(logs)), logs);
  for (const auto& rec : logs) {
    for (std::size_t i = 0; i < rec.events.size(); ++i) {
      if (i > 0) {
        EXPECT_LE(rec.events[i - 1].t, rec.events[i].t);
      }
      if (rec.events[i].feedback == Feedback::Leave) {
        EXPECT_EQ(i + 1, rec.events.size());
      }
    }
  }
}

TEST(Logs, DeterministicPerSeed) {
  auto cat = small_catalog();
  EXPECT_EQ(generate_logs(20, cat, LogConfig{}, 3), generate_logs(20, cat, LogConfig{}, 3));
}

TEST(Logs, ParseErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    try {
      parse_logs(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line_of("0\t0\t1\tskip\n0\t1\t2\n"), 2u);
  EXPECT_EQ(line_of("0\t0\t1\tbuy\n"), 1u);
  EXPECT_EQ(line_of("0\tx\t1\tskip\n"), 1u);
  EXPECT_EQ(line_of("0\t0\t-4\tskip\n"), 1u);
  EXPECT_EQ(line_of("0\t0\t1\tskip\n1\t0\t1\tskip\n0\t1\t1\tskip\n"), 3u);
  EXPECT_EQ(line_of("0\t0\t1\tleave\n0\t1\t2\tskip\n"), 2u);
  EXPECT_EQ(line_of("0\t3\t1\tskip\n0\t2\t2\tskip\n"), 2u);
}

TEST(Logs, RandomPolicySparsity) {
  auto cat = generate_catalog<double>(1000, 50, 10, 1);
  const auto logs = generate_logs(1000, cat, LogConfig{}, 4);
  std::size_t events = 0, clicks = 0, orders = 0;
  for (const auto& rec : logs)
    for (const auto& e : rec.events) {
      if (e.feedback == Feedback::Leave) continue;
      ++events;
      if (e.feedback != Feedback::Skip) ++clicks;
      if (e.feedback == Feedback::Order) ++orders;
    }
  const double click_rate = static_cast<double>(clicks) / events;
  const double order_rate = static_cast<double>(orders) / events;
  EXPECT_LT(click_rate, 0.5);
  EXPECT_LT(order_rate, 0.15 * click_rate);
  EXPECT_GT(orders, 0u);
}

TEST(Simulator, SoftmaxSumsToOne) {
  auto cat = generate_catalog<double>(40, 4, 4, 2);
  LearnedSimulator<double> sim(hrlmg::testing::tiny_shape(), cat);
  Rng rng(3);
  sim.net().init_uniform(rng);
  hrlmg::testing::randomize(sim.net(), rng, 3.0);
  for (int trial = 0; trial < 30; ++trial) {
    auto b = hrlmg::testing::random_window(WindowKind::Browse, 3, 3, 40, rng);
    auto c = hrlmg::testing::random_window(WindowKind::Click, 3, trial % 4, 40, rng);
    const auto p = sim.probabilities(b, c, trial);
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-9);
    for (double x : p) EXPECT_GE(x, 0.0);
  }
}

TEST(Simulator, GradientsMatchFiniteDifferences) {
  auto cat = generate_catalog<double>(40, 4, 4, 2);
  LearnedSimulator<double> sim(hrlmg::testing::tiny_shape(), cat);
  Rng rng(5);
  sim.net().init_uniform(rng);
  hrlmg::testing::randomize(sim.net(), rng, 0.7);
  std::vector<SimulatorExample> ex;
  for (int k = 0; k < 4; ++k)
    ex.push_back({hrlmg::testing::random_window(WindowKind::Browse, 3, 2, 40, rng),
                  hrlmg::testing::random_window(WindowKind::Click, 3, 1, 40, rng), k * 3, k % 3});
  std::vector<const SimulatorExample*> ptrs;
  std::vector<int> labels;
  for (auto& e : ex) ptrs.push_back(&e), labels.push_back(e.label);
  auto [in, x] = sim.inputs(ptrs);
  auto objective = [&] { return simulator_loss<double>(simulator_forward(sim.net(), in, x), labels); };
  SimulatorCache<double> cache;
  simulator_forward(sim.net(), in, x, &cache);
  auto grads = zeros_like(sim.net());
  simulator_backward(sim.net(), cache, labels, grads);
  EXPECT_LE(grad_check(objective, sim.net(), grads, 1e-6), 1e-4);
}

TEST(Simulator, AllSkipLogsAreDegenerate) {
  auto cat = generate_catalog<double>(40, 4, 4, 2);
  std::vector<SessionRecord> logs;
  for (int s = 0; s < 20; ++s) {
    SessionRecord r{s, {}};
    for (int t = 0; t < 5; ++t) r.events.push_back({t, (s * 5 + t) % 40, Feedback::Skip});
    logs.push_back(r);
  }
  std::ostringstream warn;
  SimulatorTrainConfig tc;
  tc.epochs = 2;
  auto [sim, report] = train_simulator(logs, cat, hrlmg::testing::tiny_shape(), tc, 1, &warn);
  EXPECT_TRUE(report.degenerate);
  EXPECT_NE(warn.str().find("single feedback class"), std::string::npos);
  EXPECT_DOUBLE_EQ(report.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(report.majority_baseline, 1.0);
}

TEST(Simulator, ExamplesDropLeaveAndReplayWindows) {
  std::vector<SessionRecord> logs{{0, {{0, 1, Feedback::Click}, {1, 2, Feedback::Skip}, {2, 3, Feedback::Leave}}}};
  const auto ex = simulator_examples(logs, 4);
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_TRUE(ex[0].browse.empty());
  EXPECT_EQ(ex[1].browse.items(), std::vector<ItemId>{1});
  EXPECT_EQ(ex[1].click.items(), std::vector<ItemId>{1});
  EXPECT_EQ(ex[0].label, feedback_class(Feedback::Click));
  EXPECT_EQ(ex[1].label, feedback_class(Feedback::Skip));
}

TEST(Simulator, EnvironmentNeverLeaves) {
  auto cat = generate_catalog<double>(40, 4, 4, 2);
  LearnedSimulator<double> sim(hrlmg::testing::tiny_shape(), cat);
  Rng rng(1);
  sim.net().init_uniform(rng);
  SimulatorEnvironment<double> env(sim, 3);
  env.reset(0);
  SessionState s(3);
  for (ItemId i = 0; i < 40; ++i) {
    const auto o = env.step(i, s);
    EXPECT_NE(o.feedback, Feedback::Leave);
    update_histories(s, i, o.feedback);
  }
}
