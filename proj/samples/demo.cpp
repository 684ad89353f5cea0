// Trains HRL-MG and the DDPG baseline on the synthetic user, then compares
// them in the long online test. Pass --quick for a seconds-long run.

#include <cstring>
#include <iomanip>
#include <iostream>

#include "hrlmg/hrlmg.hpp"

using namespace hrlmg;

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
  TrainConfig cfg;
  cfg.seed = 3;
  if (quick) {
    cfg.shape.item_dim = 8;
    cfg.shape.hidden = 8;
    cfg.shape.state_dim = 8;
    cfg.shape.critic_hidden = 8;
    cfg.catalog_items = 150;
    cfg.catalog_clusters = 5;
    cfg.sessions = 4;
    cfg.session_length = 20;
    cfg.low_batch = 8;
    cfg.high_batch = 4;
    cfg.warmup_samples = 0;
    cfg.period = 5;
    cfg.eval_sessions = 3;
    cfg.eval_long = 60;
  } else {
    cfg.sessions = 100;
    cfg.session_length = 50;
    cfg.eval_sessions = 10;
  }
  cfg.validate();

  const auto cat = generate_catalog<float>(cfg.catalog_items, cfg.shape.item_dim, cfg.catalog_clusters, cfg.seed,
                                           cfg.catalog_noise);
  std::cout << "catalog: " << cat.size() << " items, d=" << cat.dim() << ", " << cat.cluster_count() << " clusters\n";

  for (Arm arm : {Arm::HrlMg, Arm::Ddpg}) {
    SyntheticEnvironment<float> env(cat, cfg.user, cfg.seed, "train");
    const auto r = run_training(cfg, arm, cat, env);
    int high = 0;
    for (const auto& s : r.trace.sessions) high += s.high_transitions;
    const auto rep = online_test(r.model, cat, cfg.eval_sessions, cfg.eval_long);
    std::cout << std::left << std::setw(6) << to_string(arm) << " trained on " << r.trace.steps.size() << " steps ("
              << high << " high-level transitions); T=" << cfg.eval_long << " test: reward " << rep.reward.mean
              << ", clicks " << rep.clicks.mean << ", orders " << rep.orders.mean << "\n";
  }
  return 0;
}
