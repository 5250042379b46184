#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dmpo/mdp.hpp"
#include "dmpo/nn/adam.hpp"
#include "dmpo/nn/mlp.hpp"
#include "dmpo/replay_buffer.hpp"
#include "dmpo/rollout.hpp"

namespace dmpo::model {

struct ModelConfig {
  std::vector<std::size_t> hidden{16, 16};
  std::size_t kappa = 1;
  double lr = 3e-4;
  double alpha = 1.0;             // discrepancy weight
  bool residual = true;           // network predicts s_i' - s_i
  std::size_t train_steps = 200;  // gradient steps per train_models call
  std::size_t batch_size = 256;
  std::size_t holdout_every = 10; // every k-th D^E record is held out from fitting
};

/// Per-dimension affine normaliser: (x - mean) / std.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Normalizer identity(std::size_t dim);
  void fit(std::span<const std::vector<double>> rows);
  double apply(std::size_t k, double x) const { return (x - mean[k]) / stddev[k]; }
  double invert(std::size_t k, double z) const { return mean[k] + stddev[k] * z; }
};

/// Agent i's learned local dynamics: (s_{N_i^kappa}, a_i) -> (s_i', r_i).
class LocalModel {
 public:
  LocalModel(std::size_t agent, std::vector<std::size_t> members, std::size_t state_dim, ActionSpace actions,
             const ModelConfig& config, Rng& rng);

  std::size_t agent() const { return agent_; }
  const std::vector<std::size_t>& members() const { return members_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t input_dim() const { return net_.input_dim(); }
  bool residual() const { return residual_; }

  nn::Mlp& net() { return net_; }
  const nn::Mlp& net() const { return net_; }
  nn::Adam& optimizer() { return opt_; }
  Normalizer& input_normalizer() { return input_norm_; }
  Normalizer& target_normalizer() { return target_norm_; }
  const Normalizer& input_normalizer() const { return input_norm_; }
  const Normalizer& target_normalizer() const { return target_norm_; }

  /// Raw (unnormalised) input: neighborhood states then encoded own action.
  void raw_input(const GlobalState& s, const AgentAction& a, std::vector<double>& out) const;
  void normalized_input(const GlobalState& s, const AgentAction& a, std::vector<double>& out) const;
  /// Raw training target: next-state (or its delta) followed by the reward.
  void raw_target(const Transition& t, std::vector<double>& out) const;

  /// Predicted next local state and reward.
  void predict(const GlobalState& s, const AgentAction& a, LocalState& next, double& reward) const;

  /// Refits both normalisers on the given transitions.
  void fit_normalizers(std::span<const Transition* const> data);

 private:
  std::size_t agent_;
  std::vector<std::size_t> members_;
  std::size_t state_dim_;
  ActionSpace actions_;
  bool residual_;
  nn::Mlp net_;
  nn::Adam opt_;
  Normalizer input_norm_;
  Normalizer target_norm_;
};

/// Factored model: every agent predicts its own next state from its own neighborhood.
class ModelSet final : public Dynamics {
 public:
  ModelSet(const AgentGraph& graph, std::size_t state_dim, ActionSpace actions, const ModelConfig& config, Rng& rng);

  std::size_t size() const { return models_.size(); }
  LocalModel& operator[](std::size_t i) { return models_[i]; }
  const LocalModel& operator[](std::size_t i) const { return models_[i]; }
  const ModelConfig& config() const { return config_; }

  StepPrediction predict(const GlobalState& s, const JointAction& a, Rng& rng) const override;
  /// Throws std::domain_error if any prediction is non-finite.
  StepPrediction predict(const GlobalState& s, const JointAction& a) const;

 private:
  ModelConfig config_;
  std::vector<LocalModel> models_;
};

struct ModelMetrics {
  std::size_t epoch = 0;
  std::vector<double> state_mse;   // mean over samples of ||s_hat_i' - s_i'||^2
  std::vector<double> reward_mse;
  std::vector<double> train_loss;  // last minibatch loss in normalised units
};

/// Evaluates one-step prediction error on the given transitions.
ModelMetrics evaluate_models(const ModelSet& models, std::span<const Transition* const> data);

/// Minimises per-agent MSE on minibatches from the fitting split of D^E and
/// reports held-out metrics. Throws BufferError on an empty buffer.
ModelMetrics train_models(ModelSet& models, const EnvBuffer& buffer, std::size_t steps, std::size_t batch_size,
                          Rng& rng);

/// alpha * mean ||s_hat_i' - s_i'|| per agent.
std::vector<double> discrepancy_estimate(const ModelSet& models, std::span<const Transition* const> data, double alpha);

/// Splits buffer indices into (fit, held-out) by sequence number.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(const EnvBuffer& buffer,
                                                                            std::size_t every);

}  // namespace dmpo::model
