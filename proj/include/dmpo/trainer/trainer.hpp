#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmpo/agent/agent.hpp"
#include "dmpo/trainer/config.hpp"

namespace dmpo::trainer {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EvalReport {
  double reward_mean = 0.0;  // mean over episodes of the undiscounted global episode reward
  double reward_std = 0.0;
  std::vector<double> episode_rewards;
  std::vector<double> agent_reward_mean;  // per agent, mean over episodes of the summed local reward
  std::vector<std::vector<Transition>> traces;
};

/// Runs deterministic-mode episodes (argmax or mean action). Episodes end on
/// d = true. Traces are kept when `keep_traces` is set.
EvalReport evaluate(const agent::Team& team, Env& env, std::size_t episodes, Rng& rng, bool keep_traces = false);

struct EpochReport {
  std::size_t epoch = 0;
  std::size_t env_steps = 0;  // true-environment steps so far
  std::string algo;
  std::uint64_t seed = 0;
  EvalReport eval;
  std::vector<double> model_state_mse;
  std::vector<double> model_reward_mse;
  std::vector<double> discrepancy;
  agent::UpdateStats update;  // averaged over the epoch's gradient steps
  std::size_t updates = 0;
  std::size_t model_transitions = 0;
  std::size_t truncated_rollouts = 0;
  std::size_t rollout_terminations = 0;
  double wall_seconds = 0.0;  // not written to the metrics CSV
};

struct RunHooks {
  /// Called after each epoch with the current team.
  std::function<void(const EpochReport&, const agent::Team&)> on_epoch;
  /// Called for each batch of branched rollouts (DMPO only).
  std::function<void(const RolloutResult&, const EnvBuffer&)> on_rollout;
};

struct RunResult {
  std::vector<EpochReport> reports;  // reports[0] evaluates the initial policy
  std::unique_ptr<agent::Team> team;
};

RunResult run(const RunConfig& config, const RunHooks& hooks = {});
/// Each of these checks config.algo and throws ConfigError on a mismatch.
RunResult run_dmpo(const RunConfig& config, const RunHooks& hooks = {});
RunResult run_dppo(const RunConfig& config, const RunHooks& hooks = {});
RunResult run_cppo(const RunConfig& config, const RunHooks& hooks = {});

/// Builds an untrained team for the configured environment.
std::unique_ptr<agent::Team> make_team(const RunConfig& config, const Env& env, Rng& rng);

void write_metrics_csv(std::ostream& out, const std::vector<EpochReport>& reports);
void write_model_metrics_csv(std::ostream& out, const std::vector<EpochReport>& reports);

/// Per-epoch mean and std of eval_reward_mean across seeds.
void write_summary_csv(std::ostream& out, const std::vector<std::vector<EpochReport>>& runs);

/// One JSON file per agent per network plus manifest.json (holding the config).
void save_checkpoint(const std::filesystem::path& dir, const RunConfig& config, const agent::Team& team,
                     std::size_t epoch);
/// Restores a team saved by save_checkpoint; throws std::runtime_error if missing.
std::unique_ptr<agent::Team> load_checkpoint(const std::filesystem::path& dir, RunConfig& config);

/// Number formatting used for every CSV value.
std::string format_number(double v);

}  // namespace dmpo::trainer
