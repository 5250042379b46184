// dmpo: train, evaluate and verify decentralized model-based policy optimisation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dmpo/theory/oracle.hpp"
#include "dmpo/trainer/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace dmpo;

namespace {

enum class LogLevel { quiet, info, debug };

LogLevel log_level() {
  const char* v = std::getenv("DMPO_LOG_LEVEL");
  if (v == nullptr) return LogLevel::info;
  std::string s(v);
  if (s == "quiet" || s == "0") return LogLevel::quiet;
  if (s == "debug" || s == "2") return LogLevel::debug;
  return LogLevel::info;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto dash = item.find('-');
    if (dash != std::string::npos && dash > 0) {
      auto lo = std::stoull(item.substr(0, dash));
      auto hi = std::stoull(item.substr(dash + 1));
      if (hi < lo) throw std::invalid_argument("seed range '" + item + "' is empty");
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
      seeds.push_back(std::stoull(item));
    }
  }
  if (seeds.empty()) throw std::invalid_argument("no seeds given");
  return seeds;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  body(out);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string seeds;
  std::string out = "runs";
  std::string algo;
  bool parallel = false;
  std::string checkpoint;
  std::size_t episodes = 0;
};

std::vector<std::string> all_overrides(const Options& o) {
  auto ov = o.overrides;
  if (!o.algo.empty()) ov.push_back("algo=" + o.algo);
  return ov;
}

int cmd_print_config(const Options& o) {
  auto cfg = trainer::parse_config_file(o.config_path, all_overrides(o));
  std::cout << trainer::to_json(cfg).dump(2) << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  const auto base = trainer::parse_config_file(o.config_path, all_overrides(o));
  const auto seeds = o.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : parse_seeds(o.seeds);
  const fs::path root = fs::path(o.out) / base.env.name / trainer::algorithm_name(base.algo);
  const LogLevel level = log_level();

  std::vector<std::vector<trainer::EpochReport>> runs(seeds.size());
  std::vector<std::string> errors(seeds.size());
#pragma omp parallel for schedule(dynamic) if (o.parallel && seeds.size() > 1)
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    try {
      auto cfg = base;
      cfg.seed = seeds[k];
      const fs::path dir = root / ("seed" + std::to_string(seeds[k]));
      trainer::RunHooks hooks;
      hooks.on_epoch = [&](const trainer::EpochReport& r, const agent::Team& team) {
        if (level != LogLevel::quiet) {
#pragma omp critical(dmpo_log)
          std::cerr << cfg.env.name << ' ' << trainer::algorithm_name(cfg.algo) << " seed " << cfg.seed << " epoch "
                    << r.epoch << " env_steps " << r.env_steps << " reward " << trainer::format_number(r.eval.reward_mean)
                    << (level == LogLevel::debug ? " critic_loss " + trainer::format_number(r.update.critic_loss) +
                                                       " entropy " + trainer::format_number(r.update.entropy) +
                                                       " seconds " + trainer::format_number(r.wall_seconds)
                                                 : std::string())
                    << '\n';
        }
        if (cfg.train.checkpoint_every > 0 && r.epoch > 0 && r.epoch % cfg.train.checkpoint_every == 0) {
          trainer::save_checkpoint(dir / ("checkpoint_epoch" + std::to_string(r.epoch)), cfg, team, r.epoch);
        }
      };
      auto result = trainer::run(cfg, hooks);
      write_file(dir / "metrics.csv", [&](std::ostream& out) { trainer::write_metrics_csv(out, result.reports); });
      write_file(dir / "model_metrics.csv",
                 [&](std::ostream& out) { trainer::write_model_metrics_csv(out, result.reports); });
      trainer::save_checkpoint(dir / "checkpoint", cfg, *result.team, cfg.train.epochs);
      runs[k] = std::move(result.reports);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  int status = 0;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    if (!errors[k].empty()) {
      std::cerr << "seed " << seeds[k] << " failed: " << errors[k] << '\n';
      status = 1;
    }
  }
  if (status != 0) return status;
  write_file(root / "summary.csv", [&](std::ostream& out) { trainer::write_summary_csv(out, runs); });
  std::cout << "wrote " << seeds.size() << " run(s) under " << root.string() << '\n';
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.checkpoint.empty()) throw std::runtime_error("eval needs --checkpoint <dir>");
  if (!fs::exists(fs::path(o.checkpoint) / "manifest.json")) {
    throw std::runtime_error("missing checkpoint: no manifest.json in " + o.checkpoint);
  }
  trainer::RunConfig cfg;
  auto team = trainer::load_checkpoint(o.checkpoint, cfg);
  auto env = trainer::make_env(cfg.env);
  const std::size_t episodes = o.episodes > 0 ? o.episodes : cfg.train.eval_episodes;
  const auto seeds = o.seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : parse_seeds(o.seeds);
  Rng rng(seeds.front());
  auto report = trainer::evaluate(*team, *env, episodes, rng, true);
  const fs::path dir = fs::path(o.out);
  for (std::size_t e = 0; e < report.traces.size(); ++e) {
    write_file(dir / ("trace_" + std::to_string(e) + ".jsonl"),
               [&](std::ostream& out) { write_trace_jsonl(out, report.traces[e]); });
  }
  nlohmann::json summary;
  summary["env"] = cfg.env.name;
  summary["episodes"] = episodes;
  summary["reward_mean"] = report.reward_mean;
  summary["reward_std"] = report.reward_std;
  summary["episode_rewards"] = report.episode_rewards;
  summary["agent_reward_mean"] = report.agent_reward_mean;
  write_file(dir / "eval.json", [&](std::ostream& out) { out << summary.dump(2) << '\n'; });
  std::cout << "mean episode reward " << trainer::format_number(report.reward_mean) << " over " << episodes
            << " episode(s); traces in " << dir.string() << '\n';
  return 0;
}

int cmd_verify(const Options& o) {
  auto overrides = all_overrides(o);
  bool has_env = !o.config_path.empty();
  for (const auto& ov : overrides) has_env = has_env || ov.rfind("env.name=", 0) == 0;
  if (!has_env) overrides.insert(overrides.begin(), "env.name=tabular-chain");
  auto cfg = trainer::parse_config_file(o.config_path, overrides);
  theory::SuiteConfig suite;
  suite.instances = cfg.verify.instances;
  suite.agents = cfg.verify.agents;
  suite.states = cfg.verify.states;
  suite.actions = cfg.verify.actions;
  suite.gamma = cfg.verify.gamma;
  suite.r_max = cfg.verify.r_max;
  suite.kappas_value = cfg.verify.kappas_value;
  suite.kappas_gradient = cfg.verify.kappas_gradient;
  suite.logit_scale = cfg.verify.logit_scale;
  suite.measure = theory::parse_measure(cfg.verify.measure);
  suite.base_seed = o.seeds.empty() ? cfg.seed : parse_seeds(o.seeds).front();

  auto report = theory::run_suite(suite);
  const fs::path path = fs::path(o.out) / "bounds.csv";
  write_file(path, [&](std::ostream& out) { theory::write_bound_csv(out, report); });
  std::size_t failed = 0;
  for (const auto& r : report.rows) failed += r.pass ? 0 : 1;
  std::cout << report.rows.size() - failed << '/' << report.rows.size() << " bound checks hold; report in "
            << path.string() << '\n';
  return failed == 0 ? 0 : 1;
}

void add_common(CLI::App* app, Options& o) {
  app->add_option("--config", o.config_path, "JSON config file");
  app->add_option("--set", o.overrides, "Override key=value (dotted path or unique leaf name)")->take_all();
  app->add_option("--seeds", o.seeds, "Seed list, e.g. 0,1,2 or 0-4");
  app->add_option("--out", o.out, "Output directory");
  app->add_option("--algo", o.algo, "dmpo, dppo or cppo");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized model-based policy optimisation for networked systems"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "Train agents for each seed");
  add_common(train, o);
  train->add_flag("--parallel", o.parallel, "Run seeds concurrently");

  auto* eval = app.add_subcommand("eval", "Evaluate a saved checkpoint and write traces");
  add_common(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint directory");
  eval->add_option("--episodes", o.episodes, "Evaluation episodes");

  auto* verify = app.add_subcommand("verify", "Check the truncation bounds on random tabular chains");
  add_common(verify, o);

  auto* print = app.add_subcommand("print-config", "Print the fully resolved config");
  add_common(print, o);

  CLI11_PARSE(app, argc, argv);
  try {
    if (train->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    if (verify->parsed()) return cmd_verify(o);
    return cmd_print_config(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
