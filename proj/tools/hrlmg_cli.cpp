// hrlmg: data generation, training, evaluation, sweeps and plot-data export.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hrlmg/hrlmg.hpp"

namespace fs = std::filesystem;
using namespace hrlmg;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string catalog, logs, checkpoint, simulator, trace;
  std::optional<int> sessions, session_length;
  std::string param, values;
  std::string arm = "hrlmg";
  std::string policy = "random";
  int epochs = 3;
  std::vector<std::string> overrides;
};

TrainConfig resolve_config(const Options& o) {
  TrainConfig cfg = o.config.empty() ? TrainConfig{} : load_config(o.config);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, io::trim(std::string_view(kv).substr(0, eq)), io::trim(std::string_view(kv).substr(eq + 1)));
  }
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

fs::path out_path(const Options& o, const std::string& name) { return fs::path(o.out_dir) / name; }

void write_out(const Options& o, const std::string& name, const std::string& content) {
  const auto p = out_path(o, name);
  io::write_file_atomic(p, content);
  std::cout << "wrote " << p.string() << "\n";
}

template <class T>
Catalog<T> catalog_for(const Options& o, const TrainConfig& cfg) {
  Catalog<T> cat = o.catalog.empty()
                       ? generate_catalog<T>(cfg.catalog_items, cfg.shape.item_dim, cfg.catalog_clusters, cfg.seed,
                                             cfg.catalog_noise)
                       : load_catalog<T>(o.catalog);
  if (cat.dim() != cfg.shape.item_dim)
    throw ConfigError("catalog dimension " + std::to_string(cat.dim()) + " does not match item_dim " +
                      std::to_string(cfg.shape.item_dim));
  return cat;
}

// Reads the stored precision without parsing tensors, so float checkpoints
// are parsed as float.
Precision checkpoint_precision(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("meta config.precision ", 0) == 0) return io::trim(line.substr(22)) == "double" ? Precision::Double : Precision::Float;
  return Precision::Float;
}

template <class T>
std::string simulator_checkpoint_text(const LearnedSimulator<T>& sim, const TrainConfig& cfg) {
  Checkpoint<T> ck;
  ck.meta["kind"] = "simulator";
  for (const auto& key : config_keys()) ck.meta["config." + key] = get_config_value(cfg, key);
  ck.store("sim.", sim.net());
  return format_checkpoint(ck);
}

template <class T>
LearnedSimulator<T> load_simulator(const std::string& path, const Catalog<T>& cat) {
  const auto ck = parse_checkpoint<T>(io::read_file(path));
  if (ck.meta.count("kind") == 0 || ck.get("kind") != "simulator") throw ParameterError(path + " is not a simulator checkpoint");
  LearnedSimulator<T> sim(config_from_checkpoint(ck).shape, cat);
  ck.restore("sim.", sim.net());
  return sim;
}

std::string report_json(const SimulatorReport& r) {
  nlohmann::json j;
  j["accuracy"] = r.accuracy;
  j["majority_baseline"] = r.majority_baseline;
  j["train_examples"] = r.train_examples;
  j["test_examples"] = r.test_examples;
  j["degenerate"] = r.degenerate;
  j["epoch_loss"] = r.epoch_loss;
  for (int k = 0; k < kFeedbackClasses; ++k) {
    const std::string name = to_string(class_feedback(k));
    j["train_counts"][name] = r.train_counts[static_cast<std::size_t>(k)];
    const double p = r.precision[static_cast<std::size_t>(k)];
    j["precision"][name] = std::isnan(p) ? nlohmann::json(nullptr) : nlohmann::json(p);
  }
  return j.dump(2) + "\n";
}

std::string online_steps_csv(const OnlineReport& r) {
  std::ostringstream os;
  os << "session,t,item,feedback,reward\n";
  for (const auto& s : r.sessions)
    for (std::size_t t = 0; t < s.items.size(); ++t) {
      const double rw = s.rewards[t];
      Feedback f = rw >= 5.0 ? Feedback::Order : rw >= 1.0 ? Feedback::Click : Feedback::Skip;
      if (s.left && t + 1 == s.items.size()) f = Feedback::Leave;
      os << s.session << ',' << t << ',' << s.items[t] << ',' << to_string(f) << ',' << io::format_real(rw) << '\n';
    }
  return os.str();
}

std::string online_summary(const OnlineReport& r) {
  return summary_text({{"session_length", static_cast<double>(r.session_length)},
                       {"sessions", static_cast<double>(r.sessions.size())},
                       {"reward_mean", r.reward.mean},
                       {"reward_std", r.reward.std},
                       {"clicks_mean", r.clicks.mean},
                       {"orders_mean", r.orders.mean}});
}

// ---------------------------------------------------------------------------
// Commands

template <class T>
int gen_catalog(const Options& o, const TrainConfig& cfg) {
  const auto cat = generate_catalog<T>(cfg.catalog_items, cfg.shape.item_dim, cfg.catalog_clusters, cfg.seed,
                                       cfg.catalog_noise);
  write_out(o, "catalog.txt", format_catalog(cat));
  return 0;
}

template <class T>
int gen_logs(const Options& o, const TrainConfig& cfg) {
  const auto cat = catalog_for<T>(o, cfg);
  LogConfig lc;
  lc.user = cfg.user;
  if (o.session_length) lc.session_length = static_cast<std::size_t>(*o.session_length);
  const auto pol = parse_logging_policy(o.policy);
  if (!pol) throw ConfigError("--policy must be random or mixed");
  lc.policy = *pol;
  const auto logs = generate_logs(static_cast<std::size_t>(o.sessions.value_or(1000)), cat, lc, cfg.seed);
  write_out(o, "logs.txt", format_logs(logs));
  return 0;
}

template <class T>
int train_sim(const Options& o, const TrainConfig& cfg) {
  const auto cat = catalog_for<T>(o, cfg);
  const auto logs = ingest_logs(o.logs);
  SimulatorTrainConfig sc;
  sc.epochs = o.epochs;
  auto [sim, rep] = train_simulator(logs, cat, cfg.shape, sc, cfg.seed, &std::cerr);
  write_out(o, "simulator.ckpt", simulator_checkpoint_text(sim, cfg));
  write_out(o, "simulator_report.json", report_json(rep));
  std::cout << "held-out accuracy " << rep.accuracy << " (majority baseline " << rep.majority_baseline << ")\n";
  return 0;
}

template <class T>
int train(const Options& o, TrainConfig cfg) {
  const auto arm = parse_arm(o.arm);
  if (!arm) throw ConfigError("--arm must be one of hrlmg, hrl, ddpg, dnn");
  if (o.sessions) cfg.sessions = *o.sessions;
  if (o.session_length) cfg.session_length = *o.session_length;
  cfg.validate();
  const auto cat = catalog_for<T>(o, cfg);
  std::optional<LearnedSimulator<T>> sim;
  std::unique_ptr<Environment<T>> env;
  if (!o.simulator.empty()) {
    sim = load_simulator<T>(o.simulator, cat);
    env = std::make_unique<SimulatorEnvironment<T>>(*sim, cfg.seed, "train");
  } else {
    env = std::make_unique<SyntheticEnvironment<T>>(cat, cfg.user, cfg.seed, "train");
  }
  const auto r = run_training(cfg, *arm, cat, *env);
  write_out(o, "model.ckpt", format_checkpoint(to_checkpoint(r.model)));
  write_out(o, "train_steps.csv", steps_csv(r.trace));
  write_out(o, "train_sessions.csv", sessions_csv(r.trace));
  std::vector<double> rw;
  for (const auto& s : r.trace.sessions) rw.push_back(s.reward);
  const auto ms = mean_std(rw);
  write_out(o, "train_summary.json",
            summary_text({{"sessions", static_cast<double>(rw.size())}, {"reward_mean", ms.mean}, {"reward_std", ms.std}}));
  return 0;
}

template <class T>
int eval_online(const Options& o, const std::string& ck_text) {
  const auto ck = parse_checkpoint<T>(ck_text);
  const TrainConfig cfg = config_from_checkpoint(ck);
  const auto cat = catalog_for<T>(o, cfg);
  const auto model = from_checkpoint(ck, cat);
  const int length = o.session_length.value_or(cfg.eval_long);
  const int n = o.sessions.value_or(cfg.eval_sessions);
  if (length < 1 || n < 1) throw ConfigError("--session-length and --sessions must be positive");
  OnlineReport rep;
  if (!o.simulator.empty()) {
    const auto sim = load_simulator<T>(o.simulator, cat);
    SimulatorEnvironment<T> env(sim, cfg.seed, "eval");
    rep = online_test<T>(test_policy(model), env, cat, n, length, static_cast<std::size_t>(cfg.shape.window),
                         cfg.warmup_interactions, cfg.seed);
  } else {
    rep = online_test(model, cat, n, length);
  }
  const std::string tag = "online_T" + std::to_string(length);
  write_out(o, tag + ".csv", online_csv(rep));
  write_out(o, tag + "_steps.csv", online_steps_csv(rep));
  write_out(o, tag + ".json", online_summary(rep));
  std::cout << "mean reward " << rep.reward.mean << " clicks " << rep.clicks.mean << " orders " << rep.orders.mean << "\n";
  return 0;
}

template <class T>
int eval_offline(const Options& o, const std::string& ck_text) {
  const auto ck = parse_checkpoint<T>(ck_text);
  const TrainConfig cfg = config_from_checkpoint(ck);
  const auto cat = catalog_for<T>(o, cfg);
  const auto model = from_checkpoint(ck, cat);
  const auto logs = ingest_logs(o.logs);
  const auto rep = offline_test(test_policy(model), logs, cat, static_cast<std::size_t>(cfg.shape.window));
  write_out(o, "offline.csv", offline_csv(rep));
  std::cout << "MAP " << rep.map << " NDCG@20 " << rep.ndcg20 << " NDCG@40 " << rep.ndcg40 << " over " << rep.sessions
            << " sessions (" << rep.skipped << " without positives skipped)\n";
  return 0;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  for (auto f : io::split(text, ',')) {
    auto v = io::parse_number<double>(io::trim(f));
    if (!v) throw ConfigError("--values must be a comma-separated list of numbers");
    out.push_back(*v);
  }
  return out;
}

template <class T>
int run_sweep(const Options& o, TrainConfig cfg) {
  if (o.sessions) cfg.sessions = *o.sessions;
  cfg.validate();
  const auto cat = catalog_for<T>(o, cfg);
  const auto rows = sweep<T>(cfg, o.param, parse_values(o.values), cfg.sweep_seeds, cat);
  for (const auto& [metric, text] : sweep_csvs(rows)) write_out(o, "sweep_" + metric + ".csv", text);
  for (const auto& r : rows)
    write_out(o, "sweep_actions/" + r.param + "_" + io::format_real(r.value) + "_seed" + std::to_string(r.seed) + ".csv",
              actions_csv(r));
  return 0;
}

// ---------------------------------------------------------------------------
// export-plots: turns a trace CSV into plot-ready series.

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ParseError(1, "missing column '" + name + "'");
  }
  double num(std::size_t r, std::size_t c) const {
    auto v = io::parse_number<double>(rows[r][c]);
    if (!v) throw ParseError(r + 2, "invalid number '" + rows[r][c] + "'");
    return *v;
  }
};

Table read_table(const std::string& path) {
  const auto text = io::read_file(path);
  Table t;
  std::size_t lineno = 0;
  for (auto line : io::split(text, '\n')) {
    ++lineno;
    line = io::trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    for (auto f : io::split(line, ',')) fields.emplace_back(f);
    if (t.header.empty()) {
      t.header = std::move(fields);
    } else {
      if (fields.size() != t.header.size()) throw ParseError(lineno, "expected " + std::to_string(t.header.size()) + " fields");
      t.rows.push_back(std::move(fields));
    }
  }
  if (t.header.empty()) throw ParseError(1, "empty trace file");
  return t;
}

// Mean cumulative reward, clicks and orders at each step across sessions,
// mirroring the online-test panels.
std::string cumulative_series(const Table& t, const std::string& reward_col) {
  const auto cs = t.col("session"), ct = t.col("t"), cf = t.col("feedback"), cr = t.col(reward_col);
  std::map<int, std::vector<std::array<double, 3>>> per_session;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    auto& v = per_session[static_cast<int>(t.num(i, cs))];
    const auto step = static_cast<std::size_t>(t.num(i, ct));
    if (step != v.size()) throw ParseError(i + 2, "steps of a session must be contiguous from 0");
    std::array<double, 3> cur = v.empty() ? std::array<double, 3>{0, 0, 0} : v.back();
    cur[0] += t.num(i, cr);
    cur[1] += t.rows[i][cf] == "click" ? 1 : 0;
    cur[2] += t.rows[i][cf] == "order" ? 1 : 0;
    v.push_back(cur);
  }
  std::size_t horizon = 0;
  for (const auto& [_, v] : per_session) horizon = std::max(horizon, v.size());
  std::ostringstream os;
  os << "t,reward,clicks,orders\n";
  for (std::size_t step = 0; step < horizon; ++step) {
    std::array<double, 3> sum{0, 0, 0};
    for (const auto& [_, v] : per_session) {
      // A session that ended keeps its final totals.
      const auto& c = v[std::min(step, v.size() - 1)];
      for (int k = 0; k < 3; ++k) sum[static_cast<std::size_t>(k)] += c[static_cast<std::size_t>(k)];
    }
    const auto n = static_cast<double>(per_session.size());
    os << step + 1 << ',' << io::format_real(sum[0] / n) << ',' << io::format_real(sum[1] / n) << ','
       << io::format_real(sum[2] / n) << '\n';
  }
  return os.str();
}

std::string sweep_series(const Table& t) {
  const auto cv = t.col("value");
  const std::string metric = t.header.back();
  std::map<double, std::vector<double>> by_value;
  for (std::size_t i = 0; i < t.rows.size(); ++i) by_value[t.num(i, cv)].push_back(t.num(i, t.header.size() - 1));
  std::ostringstream os;
  os << "value," << metric << "_mean," << metric << "_std,seeds\n";
  for (const auto& [v, xs] : by_value) {
    const auto ms = mean_std(xs);
    os << io::format_real(v) << ',' << io::format_real(ms.mean) << ',' << io::format_real(ms.std) << ',' << xs.size() << '\n';
  }
  return os.str();
}

int export_plots(const Options& o) {
  const Table t = read_table(o.trace);
  const auto has = [&](const std::string& c) { return std::find(t.header.begin(), t.header.end(), c) != t.header.end(); };
  const std::string stem = fs::path(o.trace).stem().string();
  if (has("r_ex") && has("feedback")) {
    write_out(o, "plot_" + stem + "_cumulative.csv", cumulative_series(t, "r_ex"));
    // Per-session learning curve.
    const auto cs = t.col("session"), cr = t.col("r_ex"), cf = t.col("feedback");
    std::map<int, std::array<double, 3>> sess;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      auto& s = sess[static_cast<int>(t.num(i, cs))];
      s[0] += t.num(i, cr);
      s[1] += t.rows[i][cf] == "click";
      s[2] += t.rows[i][cf] == "order";
    }
    std::ostringstream os;
    os << "session,reward,clicks,orders\n";
    for (const auto& [k, s] : sess)
      os << k << ',' << io::format_real(s[0]) << ',' << io::format_real(s[1]) << ',' << io::format_real(s[2]) << '\n';
    write_out(o, "plot_" + stem + "_sessions.csv", os.str());
  } else if (has("reward") && has("feedback") && has("t")) {
    write_out(o, "plot_" + stem + "_cumulative.csv", cumulative_series(t, "reward"));
  } else if (t.header.size() == 4 && t.header[0] == "param" && t.header[1] == "value" && t.header[2] == "seed") {
    write_out(o, "plot_" + stem + ".csv", sweep_series(t));
  } else {
    throw ParseError(1, "unrecognised trace header (expected a training step trace, an online step trace or a sweep CSV)");
  }
  return 0;
}

template <class F>
int with_precision(Precision p, F&& f) {
  return p == Precision::Double ? f.template operator()<double>() : f.template operator()<float>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HRL-MG hierarchical recommender: data generation, training and evaluation"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--config", o.config, "key=value configuration file")->check(CLI::ExistingFile);
    c->add_option("--seed", o.seed, "override the configured seed");
    c->add_option("--set", o.overrides, "override one config key (key=value); repeatable");
    c->add_option("--out-dir", o.out_dir, "directory for output files");
  };
  auto catalog_opt = [&](CLI::App* c) {
    c->add_option("--catalog", o.catalog, "catalog file (default: generate from the config)")->check(CLI::ExistingFile);
  };

  auto* c_cat = app.add_subcommand("gen-catalog", "generate a clustered synthetic item catalog");
  common(c_cat);

  auto* c_logs = app.add_subcommand("gen-logs", "generate interaction logs from the synthetic user");
  common(c_logs);
  catalog_opt(c_logs);
  c_logs->add_option("--sessions", o.sessions, "number of sessions (default 1000)")->check(CLI::NonNegativeNumber);
  c_logs->add_option("--session-length", o.session_length, "events per session")->check(CLI::PositiveNumber);
  c_logs->add_option("--policy", o.policy, "logging policy")->check(CLI::IsMember({"random", "mixed"}));

  auto* c_sim = app.add_subcommand("train-simulator", "fit the learned feedback simulator on logs");
  common(c_sim);
  catalog_opt(c_sim);
  c_sim->add_option("--logs", o.logs, "log file")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--epochs", o.epochs, "training epochs")->check(CLI::PositiveNumber);

  auto* c_train = app.add_subcommand("train", "train one arm online");
  common(c_train);
  catalog_opt(c_train);
  c_train->add_option("--arm", o.arm, "hrlmg, hrl, ddpg or dnn")->check(CLI::IsMember({"hrlmg", "hrl", "ddpg", "dnn"}));
  c_train->add_option("--sessions", o.sessions, "training sessions")->check(CLI::NonNegativeNumber);
  c_train->add_option("--session-length", o.session_length, "training session length")->check(CLI::PositiveNumber);
  c_train->add_option("--simulator", o.simulator, "train against a learned simulator checkpoint")->check(CLI::ExistingFile);

  auto* c_on = app.add_subcommand("eval-online", "online test of a trained model");
  catalog_opt(c_on);
  c_on->add_option("--out-dir", o.out_dir, "directory for output files");
  c_on->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  c_on->add_option("--sessions", o.sessions, "test sessions")->check(CLI::PositiveNumber);
  c_on->add_option("--session-length", o.session_length, "steps per session, e.g. 50 or 300")->check(CLI::PositiveNumber);
  c_on->add_option("--simulator", o.simulator, "test against a learned simulator checkpoint")->check(CLI::ExistingFile);

  auto* c_off = app.add_subcommand("eval-offline", "offline rerank test on logged sessions");
  catalog_opt(c_off);
  c_off->add_option("--out-dir", o.out_dir, "directory for output files");
  c_off->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  c_off->add_option("--logs", o.logs, "log file")->required()->check(CLI::ExistingFile);

  auto* c_sweep = app.add_subcommand("sweep", "sensitivity sweep over alpha or M");
  common(c_sweep);
  catalog_opt(c_sweep);
  c_sweep->add_option("--param", o.param, "alpha or M")->required()->check(CLI::IsMember({"alpha", "M"}));
  c_sweep->add_option("--values", o.values, "comma-separated values")->required();
  c_sweep->add_option("--sessions", o.sessions, "training sessions per arm")->check(CLI::NonNegativeNumber);

  auto* c_plot = app.add_subcommand("export-plots", "turn a trace CSV into plot-ready series");
  c_plot->add_option("--trace", o.trace, "training steps, online steps or sweep CSV")->required()->check(CLI::ExistingFile);
  c_plot->add_option("--out-dir", o.out_dir, "directory for output files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (c_plot->parsed()) return export_plots(o);
    if (c_on->parsed() || c_off->parsed()) {
      const auto text = io::read_file(o.checkpoint);
      const bool online = c_on->parsed();
      return with_precision(checkpoint_precision(text), [&]<class T>() {
        return online ? eval_online<T>(o, text) : eval_offline<T>(o, text);
      });
    }
    const TrainConfig cfg = resolve_config(o);
    return with_precision(cfg.precision, [&]<class T>() {
      if (c_cat->parsed()) return gen_catalog<T>(o, cfg);
      if (c_logs->parsed()) return gen_logs<T>(o, cfg);
      if (c_sim->parsed()) return train_sim<T>(o, cfg);
      if (c_train->parsed()) return train<T>(o, cfg);
      return run_sweep<T>(o, cfg);
    });
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
