#include "dmpo/trainer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "dmpo/model/local_model.hpp"
#include "dmpo/replay_buffer.hpp"
#include "dmpo/rollout.hpp"

namespace dmpo::trainer {

using nlohmann::json;

namespace {

constexpr std::uint64_t kEvalStream = 0x5eed0e7a1ULL;

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

void accumulate(agent::UpdateStats& total, const agent::UpdateStats& s) {
  total.policy_loss += s.policy_loss;
  total.critic_loss += s.critic_loss;
  total.entropy += s.entropy;
  total.mean_ratio += s.mean_ratio;
  total.clip_fraction += s.clip_fraction;
}

void scale(agent::UpdateStats& s, double k) {
  s.policy_loss *= k;
  s.critic_loss *= k;
  s.entropy *= k;
  s.mean_ratio *= k;
  s.clip_fraction *= k;
}

// Splits on-policy environment steps into windows of `window` steps and turns
// each into training samples with critic bootstrap at the window end.
std::vector<agent::TrainSample> on_policy_samples(const agent::Team& team, const std::vector<RolloutStep>& steps,
                                                  std::size_t window) {
  std::vector<agent::TrainSample> out;
  out.reserve(steps.size());
  for (std::size_t first = 0; first < steps.size(); first += window) {
    std::size_t last = std::min(first + window, steps.size());
    std::vector<RolloutStep> chunk(steps.begin() + static_cast<std::ptrdiff_t>(first),
                                   steps.begin() + static_cast<std::ptrdiff_t>(last));
    auto samples = agent::make_train_samples(team, std::move(chunk));
    for (auto& s : samples) out.push_back(std::move(s));
  }
  return out;
}

class UpdateRunner {
 public:
  UpdateRunner(agent::Team& team, std::size_t epoch) : team_(team), epoch_(epoch) {}

  void step(std::span<const agent::TrainSample* const> batch) {
    try {
      accumulate(total_, agent::update_team(team_, batch));
    } catch (const std::domain_error& e) {
      throw TrainingError("non-finite update in epoch " + std::to_string(epoch_) + " after " +
                          std::to_string(count_) + " gradient steps: " + e.what());
    }
    ++count_;
  }

  std::size_t count() const { return count_; }
  agent::UpdateStats mean() const {
    auto s = total_;
    if (count_ > 0) scale(s, 1.0 / static_cast<double>(count_));
    return s;
  }

 private:
  agent::Team& team_;
  std::size_t epoch_;
  agent::UpdateStats total_;
  std::size_t count_ = 0;
};

}  // namespace

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

EvalReport evaluate(const agent::Team& team, Env& env, std::size_t episodes, Rng& rng, bool keep_traces) {
  EvalReport report;
  const std::size_t n = env.num_agents();
  report.agent_reward_mean.assign(n, 0.0);
  for (std::size_t e = 0; e < episodes; ++e) {
    GlobalState s = env.reset(rng);
    double total = 0.0;
    std::vector<Transition> trace;
    for (std::size_t t = 0; t < env.horizon(); ++t) {
      Transition tr = env.step(team.act_deterministic(s));
      total += tr.global_reward();
      for (std::size_t i = 0; i < n; ++i) report.agent_reward_mean[i] += tr.r[i] / static_cast<double>(episodes);
      s = tr.s_next;
      bool done = tr.d;
      if (keep_traces) trace.push_back(std::move(tr));
      if (done) break;
    }
    report.episode_rewards.push_back(total);
    if (keep_traces) report.traces.push_back(std::move(trace));
  }
  report.reward_mean = mean_of(report.episode_rewards);
  report.reward_std = std_of(report.episode_rewards);
  return report;
}

std::unique_ptr<agent::Team> make_team(const RunConfig& config, const Env& env, Rng& rng) {
  return std::make_unique<agent::Team>(env.graph(), env.state_dim(), env.scaling(), env.action_space(),
                                       effective_agent_config(config, env.graph()), rng);
}

RunResult run(const RunConfig& config, const RunHooks& hooks) {
  config.validate();
  const auto& tc = config.train;
  const bool use_model = config.algo == Algorithm::dmpo && tc.branches > 0;

  Rng rng(config.seed);
  auto env = make_env(config.env);
  auto eval_env = make_env(config.env);
  const std::size_t n = env->num_agents();

  RunResult result;
  result.team = make_team(config, *env, rng);
  agent::Team& team = *result.team;

  Rng env_rng = rng.split();
  Rng model_rng = rng.split();
  Rng rollout_rng = rng.split();
  Rng update_rng = rng.split();

  EnvBuffer env_buffer(tc.env_buffer, n, env->state_dim(), env->action_space().stored_dim());
  ReplayBuffer<agent::TrainSample> model_buffer(tc.model_buffer);
  std::unique_ptr<model::ModelSet> models;
  if (use_model) models = std::make_unique<model::ModelSet>(env->graph(), env->state_dim(), env->action_space(),
                                                            config.model, model_rng);

  RolloutOptions options;
  options.is_terminal = [&env](const GlobalState& s) { return env->is_failure(s); };
  options.rebranch = [&env_buffer](Rng& r) { return env_buffer.sample_branch_starts(1, r).front(); };

  auto report_epoch = [&](EpochReport& rep, std::chrono::steady_clock::time_point start) {
    Rng eval_rng(config.seed ^ kEvalStream);
    rep.eval = evaluate(team, *eval_env, tc.eval_episodes, eval_rng);
    rep.algo = algorithm_name(config.algo);
    rep.seed = config.seed;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (hooks.on_epoch) hooks.on_epoch(rep, team);
    result.reports.push_back(std::move(rep));
  };

  {
    EpochReport initial;
    initial.model_state_mse.assign(n, 0.0);
    initial.model_reward_mse.assign(n, 0.0);
    initial.discrepancy.assign(n, 0.0);
    report_epoch(initial, std::chrono::steady_clock::now());
  }

  GlobalState s = env->reset(env_rng);
  std::size_t env_steps = 0;
  std::vector<const agent::TrainSample*> batch(tc.minibatch);

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochReport rep;
    rep.epoch = epoch;
    rep.model_state_mse.assign(n, 0.0);
    rep.model_reward_mse.assign(n, 0.0);
    rep.discrepancy.assign(n, 0.0);

    std::vector<RolloutStep> epoch_data;
    epoch_data.reserve(tc.env_steps_per_epoch);
    for (std::size_t k = 0; k < tc.env_steps_per_epoch; ++k) {
      JointSample sample = team.act(s, env_rng);
      Transition t = env->step(sample.action);
      env_buffer.push(t);
      s = t.d ? env->reset(env_rng) : t.s_next;
      epoch_data.push_back({std::move(t), std::move(sample.log_prob)});
      ++env_steps;
    }
    rep.env_steps = env_steps;

    UpdateRunner updates(team, epoch);
    bool used_model = false;
    if (use_model) {
      auto metrics = model::train_models(*models, env_buffer, config.model.train_steps, config.model.batch_size,
                                         model_rng);
      rep.model_state_mse = metrics.state_mse;
      rep.model_reward_mse = metrics.reward_mse;
      auto [fit, held] = model::holdout_split(env_buffer, config.model.holdout_every);
      std::vector<const Transition*> held_data;
      held_data.reserve(held.size());
      for (std::size_t k : held) held_data.push_back(&env_buffer[k]);
      rep.discrepancy = model::discrepancy_estimate(*models, held_data, config.model.alpha);

      bool have_episode = true;
      try {
        env_buffer.latest_episode();
      } catch (const BufferError&) {
        have_episode = false;
      }
      if (have_episode && tc.branches > 0) {
        used_model = true;
        model_buffer.clear();
        for (std::size_t b = 0; b < tc.branches; ++b) {
          auto starts = env_buffer.sample_branch_starts(tc.rollouts_per_branch, rollout_rng);
          auto rollout = branched_rollout(*models, team, starts, tc.rollout_length, rollout_rng, options);
          if (hooks.on_rollout) hooks.on_rollout(rollout, env_buffer);
          rep.truncated_rollouts += rollout.truncated;
          rep.rollout_terminations += rollout.terminations;
          rep.model_transitions += rollout.transitions();
          for (auto& traj : rollout.trajectories) {
            for (auto& sample : agent::make_train_samples(team, std::move(traj))) model_buffer.push(std::move(sample));
          }
          if (model_buffer.empty()) continue;
          for (std::size_t g = 0; g < tc.grad_steps; ++g) {
            auto idx = model_buffer.sample_indices(tc.minibatch, update_rng);
            for (std::size_t k = 0; k < idx.size(); ++k) batch[k] = &model_buffer[idx[k]];
            updates.step(batch);
          }
        }
      }
    }
    if (!used_model) {
      const std::size_t rounds = std::max<std::size_t>(tc.branches, 1);
      for (std::size_t round = 0; round < rounds; ++round) {
        auto samples = on_policy_samples(team, epoch_data, tc.rollout_length);
        for (std::size_t g = 0; g < tc.grad_steps; ++g) {
          for (auto& p : batch) p = &samples[update_rng.index(samples.size())];
          updates.step(batch);
        }
      }
    }
    rep.update = updates.mean();
    rep.updates = updates.count();
    report_epoch(rep, start);
  }
  return result;
}

RunResult run_dmpo(const RunConfig& config, const RunHooks& hooks) {
  if (config.algo != Algorithm::dmpo) throw ConfigError("run_dmpo needs algo=dmpo");
  return run(config, hooks);
}

RunResult run_dppo(const RunConfig& config, const RunHooks& hooks) {
  if (config.algo != Algorithm::dppo) throw ConfigError("run_dppo needs algo=dppo");
  return run(config, hooks);
}

RunResult run_cppo(const RunConfig& config, const RunHooks& hooks) {
  if (config.algo != Algorithm::cppo) throw ConfigError("run_cppo needs algo=cppo");
  return run(config, hooks);
}

void write_metrics_csv(std::ostream& out, const std::vector<EpochReport>& reports) {
  const std::size_t n = reports.empty() ? 0 : reports.front().eval.agent_reward_mean.size();
  out << "epoch,env_steps,algo,seed,eval_reward_mean,eval_reward_std,policy_loss,critic_loss,entropy,mean_ratio,"
         "clip_fraction,updates,model_transitions,truncated_rollouts,rollout_terminations,model_state_mse_mean,"
         "model_reward_mse_mean,discrepancy_mean";
  for (std::size_t i = 0; i < n; ++i) out << ",eval_reward_" << i;
  for (std::size_t i = 0; i < n; ++i) out << ",model_state_mse_" << i;
  out << '\n';
  for (const auto& r : reports) {
    out << r.epoch << ',' << r.env_steps << ',' << r.algo << ',' << r.seed << ',' << format_number(r.eval.reward_mean)
        << ',' << format_number(r.eval.reward_std) << ',' << format_number(r.update.policy_loss) << ','
        << format_number(r.update.critic_loss) << ',' << format_number(r.update.entropy) << ','
        << format_number(r.update.mean_ratio) << ',' << format_number(r.update.clip_fraction) << ',' << r.updates
        << ',' << r.model_transitions << ',' << r.truncated_rollouts << ',' << r.rollout_terminations << ','
        << format_number(mean_of(r.model_state_mse)) << ',' << format_number(mean_of(r.model_reward_mse)) << ','
        << format_number(mean_of(r.discrepancy));
    for (double v : r.eval.agent_reward_mean) out << ',' << format_number(v);
    for (double v : r.model_state_mse) out << ',' << format_number(v);
    out << '\n';
  }
}

void write_model_metrics_csv(std::ostream& out, const std::vector<EpochReport>& reports) {
  out << "epoch,agent,state_mse,reward_mse\n";
  for (const auto& r : reports) {
    if (r.epoch == 0) continue;
    for (std::size_t i = 0; i < r.model_state_mse.size(); ++i) {
      out << r.epoch << ',' << i << ',' << format_number(r.model_state_mse[i]) << ','
          << format_number(r.model_reward_mse[i]) << '\n';
    }
  }
}

void write_summary_csv(std::ostream& out, const std::vector<std::vector<EpochReport>>& runs) {
  out << "epoch,env_steps,seeds,eval_reward_mean,eval_reward_std\n";
  if (runs.empty()) return;
  std::size_t epochs = runs.front().size();
  for (const auto& r : runs) epochs = std::min(epochs, r.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::vector<double> values;
    for (const auto& r : runs) values.push_back(r[e].eval.reward_mean);
    out << runs.front()[e].epoch << ',' << runs.front()[e].env_steps << ',' << runs.size() << ','
        << format_number(mean_of(values)) << ',' << format_number(std_of(values)) << '\n';
  }
}

namespace {

json net_json(const nn::Mlp& net) {
  json j;
  j["input_dim"] = net.spec().input_dim;
  j["hidden"] = net.spec().hidden;
  j["output_dim"] = net.spec().output_dim;
  j["params"] = std::vector<double>(net.params().begin(), net.params().end());
  return j;
}

void load_net(nn::Mlp& net, const json& j, const std::string& what) {
  if (j.at("input_dim").get<std::size_t>() != net.spec().input_dim ||
      j.at("hidden").get<std::vector<std::size_t>>() != net.spec().hidden ||
      j.at("output_dim").get<std::size_t>() != net.spec().output_dim) {
    throw std::runtime_error("checkpoint " + what + " does not match the configured network shape");
  }
  net.set_params(j.at("params").get<std::vector<double>>());
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing checkpoint file " + path.string());
  return json::parse(in);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const RunConfig& config, const agent::Team& team,
                     std::size_t epoch) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["epoch"] = epoch;
  manifest["agents"] = team.size();
  manifest["config"] = to_json(config);
  for (std::size_t i = 0; i < team.size(); ++i) {
    json policy = net_json(team[i].policy());
    policy["log_std"] = team[i].head().log_std();
    write_json(dir / ("agent" + std::to_string(i) + "_policy.json"), policy);
    write_json(dir / ("agent" + std::to_string(i) + "_critic.json"), net_json(team[i].critic()));
  }
  write_json(dir / "manifest.json", manifest);
}

std::unique_ptr<agent::Team> load_checkpoint(const std::filesystem::path& dir, RunConfig& config) {
  json manifest = read_json(dir / "manifest.json");
  config = from_json(manifest.at("config"));
  auto env = make_env(config.env);
  Rng rng(config.seed);
  auto team = make_team(config, *env, rng);
  if (manifest.at("agents").get<std::size_t>() != team->size()) {
    throw std::runtime_error("checkpoint agent count does not match the configured environment");
  }
  for (std::size_t i = 0; i < team->size(); ++i) {
    json policy = read_json(dir / ("agent" + std::to_string(i) + "_policy.json"));
    load_net((*team)[i].policy(), policy, "policy " + std::to_string(i));
    (*team)[i].head().log_std() = policy.at("log_std").get<std::vector<double>>();
    load_net((*team)[i].critic(), read_json(dir / ("agent" + std::to_string(i) + "_critic.json")),
             "critic " + std::to_string(i));
  }
  return team;
}

}  // namespace dmpo::trainer
