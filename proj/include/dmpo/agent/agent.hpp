#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dmpo/mdp.hpp"
#include "dmpo/nn/adam.hpp"
#include "dmpo/nn/kernels.hpp"
#include "dmpo/nn/mlp.hpp"
#include "dmpo/nn/policy_head.hpp"
#include "dmpo/rollout.hpp"

namespace dmpo::agent {

/// How the terminal critic value enters the rollout return target.
enum class Bootstrap {
  discounted,  // gamma^(T-t) V(s^T)
  literal,     // V(s^T) added undiscounted
};

struct AgentConfig {
  std::vector<std::size_t> policy_hidden{64, 64};
  std::vector<std::size_t> critic_hidden{64, 64};
  std::size_t kappa_policy = 1;
  std::size_t kappa_critic = 2;
  double lr_policy = 3e-4;
  double lr_critic = 3e-4;
  double gamma = 0.99;
  double clip_eps = 0.2;
  double entropy_beta = 0.01;
  double grad_clip = 0.5;
  bool normalize_advantages = true;
  Bootstrap bootstrap = Bootstrap::discounted;
  double initial_log_std = -0.5;
  double policy_output_gain = 0.01;
  double reward_scale = 1.0;  // applied to rewards in training samples only
  // TD residual reward: (1/n) * sum_{j in N_i^kappa_c} r_j on the scale of the mixed value,
  // or the agent's own r_i when false.
  bool neighborhood_reward = true;
};

/// One agent's actor, extended critic and their optimizers.
class AgentNets {
 public:
  AgentNets(std::size_t index, std::vector<std::size_t> policy_members, std::vector<std::size_t> critic_members,
            std::size_t state_dim, const StateScaling& scaling, const ActionSpace& actions, const AgentConfig& config,
            Rng& rng);

  std::size_t index() const { return index_; }
  const std::vector<std::size_t>& policy_members() const { return policy_members_; }
  const std::vector<std::size_t>& critic_members() const { return critic_members_; }

  nn::Mlp& policy() { return policy_; }
  const nn::Mlp& policy() const { return policy_; }
  nn::PolicyHead& head() { return head_; }
  const nn::PolicyHead& head() const { return head_; }
  nn::Mlp& critic() { return critic_; }
  const nn::Mlp& critic() const { return critic_; }
  nn::Adam& policy_optimizer() { return policy_opt_; }
  nn::Adam& critic_optimizer() { return critic_opt_; }

  /// Scaled projection of s onto the policy (or critic) neighborhood.
  void policy_input(const GlobalState& s, std::span<double> out) const;
  void critic_input(const GlobalState& s, std::span<double> out) const;

  /// V^{phi_i}(s_{N_i^kappa_c}).
  double extended_value(const GlobalState& s) const;
  nn::PolicyHead::Sample act(const GlobalState& s, Rng& rng) const;
  AgentAction act_deterministic(const GlobalState& s) const;

  /// Policy parameters followed by the gaussian log-std (if any).
  std::size_t policy_param_count() const { return policy_.param_count() + head_.log_std().size(); }
  /// Applies a combined gradient (layout of policy_param_count()) with Adam.
  void apply_policy_gradient(std::span<const double> grad);
  void apply_critic_gradient(std::span<const double> grad);

 private:
  void project(const GlobalState& s, const std::vector<std::size_t>& members, std::span<double> out) const;

  std::size_t index_;
  std::vector<std::size_t> policy_members_;
  std::vector<std::size_t> critic_members_;
  std::size_t state_dim_;
  StateScaling scaling_;
  nn::Mlp policy_;
  nn::PolicyHead head_;
  nn::Mlp critic_;
  nn::Adam policy_opt_;
  nn::Adam critic_opt_;
};

/// All agents of a networked system plus the neighborhood indices they share.
class Team final : public JointPolicy {
 public:
  Team(const AgentGraph& graph, std::size_t state_dim, const StateScaling& scaling, const ActionSpace& actions,
       const AgentConfig& config, Rng& rng);

  std::size_t size() const { return agents_.size(); }
  AgentNets& operator[](std::size_t i) { return agents_[i]; }
  const AgentNets& operator[](std::size_t i) const { return agents_[i]; }
  const AgentConfig& config() const { return config_; }
  const NeighborhoodIndex& critic_index() const { return critic_index_; }
  const NeighborhoodIndex& policy_index() const { return policy_index_; }

  JointSample act(const GlobalState& s, Rng& rng) const override;
  JointAction act_deterministic(const GlobalState& s) const;

  /// V^{phi_j}(s) for every agent j.
  std::vector<double> critic_values(const GlobalState& s) const;
  /// Mixed values V~_i(s) for every agent i.
  std::vector<double> mixed_values(const GlobalState& s) const;

 private:
  AgentConfig config_;
  NeighborhoodIndex policy_index_;
  NeighborhoodIndex critic_index_;
  std::vector<AgentNets> agents_;
};

/// V~_i = (1/n) * sum_{j in N_i^kappa} V_j, for every i.
std::vector<double> mixed_value(std::span<const double> critic_values, const NeighborhoodIndex& index);

/// Return targets for a T-step trajectory (rewards[t][i], dones[t]) with
/// terminal critic values bootstrap[i]; a done step cuts the bootstrap.
std::vector<std::vector<double>> return_targets(const std::vector<std::vector<double>>& rewards,
                                                const std::vector<bool>& dones, std::span<const double> bootstrap,
                                                double gamma, Bootstrap mode = Bootstrap::discounted);

/// r + gamma * V~(s') - V~(s), with the bootstrap term dropped when done.
inline double td_advantage(double reward, bool done, double mixed_next, double mixed_now, double gamma) {
  return reward + (done ? 0.0 : gamma * mixed_next) - mixed_now;
}

/// Shifts and scales to zero mean and unit variance (no-op for fewer than two entries).
void standardize(std::span<double> values);

struct PolicyBatch {
  nn::Matrix inputs;  // scaled policy-neighborhood states
  std::vector<AgentAction> actions;
  std::vector<double> old_log_prob;
  std::vector<double> advantage;
};

struct PolicyLoss {
  double loss = 0.0;
  double surrogate = 0.0;  // mean clipped surrogate objective (to be maximised)
  double entropy = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  std::vector<double> grad;  // layout of AgentNets::policy_param_count()
};

/// Clipped surrogate loss with entropy bonus:
///   mean(-min(rho A, clip(rho, 1-eps, 1+eps) A)) - beta * mean(H).
/// Throws std::domain_error on a non-finite ratio.
PolicyLoss policy_loss(const AgentNets& nets, const PolicyBatch& batch, double clip_eps, double beta);

struct CriticLoss {
  double loss = 0.0;
  std::vector<double> grad;
};

/// mean((V(s) - R)^2). `tape` may carry a forward pass already computed on `inputs`.
CriticLoss critic_loss(const AgentNets& nets, const nn::Matrix& inputs, std::span<const double> targets,
                       const nn::BatchTape* tape = nullptr);

/// Training record: a transition plus behaviour log-probs and return targets.
struct TrainSample {
  Transition t;
  std::vector<double> old_log_prob;
  std::vector<double> return_target;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
};

/// One synchronous gradient step for every agent on a shared minibatch.
/// Advantages come from the mixed values of the frozen pre-step critics.
UpdateStats update_team(Team& team, std::span<const TrainSample* const> batch);

/// Turns trajectory steps into training samples with reward-to-go return targets
/// bootstrapped with the team's current critics at the trajectory's end.
std::vector<TrainSample> make_train_samples(const Team& team, std::vector<RolloutStep>&& trajectory);

}  // namespace dmpo::agent
