#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmpo/agent/agent.hpp"
#include "dmpo/envs/cacc.hpp"
#include "dmpo/envs/ring.hpp"
#include "dmpo/mdp.hpp"
#include "dmpo/model/local_model.hpp"
#include "json.hpp"

namespace dmpo::trainer {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class Algorithm { dmpo, dppo, cppo };

std::string algorithm_name(Algorithm a);
Algorithm parse_algorithm(const std::string& name);

struct TabularEnvConfig {
  std::size_t agents = 4;
  std::size_t states = 2;
  std::size_t actions = 2;
  double r_max = 1.0;
  std::uint64_t mdp_seed = 0;
  std::size_t horizon = 100;
};

struct EnvConfig {
  std::string name;  // cacc-catchup | cacc-slowdown | ring-attenuation | tabular-chain
  envs::CaccConfig cacc;
  envs::RingConfig ring;
  TabularEnvConfig tabular;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t env_steps_per_epoch = 1000;
  std::size_t branches = 10;             // B
  std::size_t rollouts_per_branch = 40;  // M
  std::size_t rollout_length = 25;       // T
  std::size_t grad_steps = 20;           // G
  std::size_t minibatch = 256;
  std::size_t eval_episodes = 5;
  std::size_t env_buffer = 100000;
  std::size_t model_buffer = 400000;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
};

struct VerifyConfig {
  std::size_t instances = 20;
  std::size_t agents = 4;
  std::size_t states = 2;
  std::size_t actions = 2;
  double gamma = 0.9;
  double r_max = 1.0;
  std::vector<std::size_t> kappas_value{0, 1, 2, 3};
  std::vector<std::size_t> kappas_gradient{1, 2, 3};
  double logit_scale = 1.0;  // random softmax logits ~ U[-scale, scale]
  std::string measure = "occupancy";  // occupancy | uniform
};

struct RunConfig {
  EnvConfig env;
  Algorithm algo = Algorithm::dmpo;
  std::uint64_t seed = 0;
  TrainConfig train;
  agent::AgentConfig agent;
  model::ModelConfig model;
  VerifyConfig verify;

  /// Throws ConfigError on invalid counts or values.
  void validate() const;
  bool operator==(const RunConfig& other) const;
};

/// Full default tree for an environment, including its per-task learning rates and critic kappa.
nlohmann::json default_config_json(const std::string& env_name);

nlohmann::json to_json(const RunConfig& config);
/// Reads a complete tree (every key present) into a validated RunConfig.
RunConfig from_json(const nlohmann::json& tree);

/// Builds a validated RunConfig from a (possibly partial) tree plus
/// `key=value` overrides. Keys may be dotted paths or unambiguous leaf names.
/// Unknown keys are rejected with the list of valid keys.
RunConfig parse_config(const nlohmann::json& file_tree, const std::vector<std::string>& overrides);
RunConfig parse_config_file(const std::string& path, const std::vector<std::string>& overrides);

/// Instantiates the configured environment.
std::unique_ptr<Env> make_env(const EnvConfig& config);

/// Effective agent settings after algorithm-specific forcing (cppo: critic kappa = diameter).
agent::AgentConfig effective_agent_config(const RunConfig& config, const AgentGraph& graph);

}  // namespace dmpo::trainer
