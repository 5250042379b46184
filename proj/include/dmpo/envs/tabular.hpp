#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dmpo/mdp.hpp"

namespace dmpo::envs {

/// Small factored MDP on a chain: each agent's next state depends on its
/// 1-hop neighborhood state and its own action, and its reward on its own
/// state and action. Small enough to enumerate the global state space.
class TabularNetMdp {
 public:
  static constexpr std::size_t kMaxGlobalStates = 4096;

  TabularNetMdp(std::size_t agents, std::size_t states, std::size_t actions, double gamma);

  std::size_t num_agents() const { return n_; }
  std::size_t local_states() const { return states_; }
  std::size_t local_actions() const { return actions_; }
  double gamma() const { return gamma_; }
  const AgentGraph& graph() const { return graph_; }
  const NeighborhoodIndex& neighbors() const { return neighbors_; }

  std::size_t global_states() const { return global_states_; }
  std::size_t joint_actions() const { return joint_actions_; }

  /// Local state of agent i in global state index g.
  std::size_t local_of(std::size_t g, std::size_t i) const { return (g / stride_[i]) % states_; }
  std::size_t encode(const std::vector<std::size_t>& locals) const;
  std::vector<std::size_t> decode(std::size_t g) const;
  std::size_t local_action_of(std::size_t joint, std::size_t i) const { return (joint / action_stride_[i]) % actions_; }

  /// Mixed-radix code of the states of `members` (first member least significant).
  std::size_t neighborhood_code(std::size_t g, const std::vector<std::size_t>& members) const;
  /// Number of distinct neighborhood codes for agent i's 1-hop neighborhood.
  std::size_t neighborhood_configs(std::size_t i) const;

  /// P_i(s_i' | s_{N_i}, a_i) with `code` = neighborhood_code(g, neighbors().members(i)).
  double local_prob(std::size_t i, std::size_t code, std::size_t action, std::size_t next) const {
    return transition_[i][(code * actions_ + action) * states_ + next];
  }
  double& local_prob_ref(std::size_t i, std::size_t code, std::size_t action, std::size_t next) {
    return transition_[i][(code * actions_ + action) * states_ + next];
  }
  double reward(std::size_t i, std::size_t state, std::size_t action) const {
    return reward_[i][state * actions_ + action];
  }
  double& reward_ref(std::size_t i, std::size_t state, std::size_t action) {
    return reward_[i][state * actions_ + action];
  }

  /// Product of the local conditionals.
  double global_prob(std::size_t g, std::size_t joint, std::size_t g_next) const;
  /// Samples each agent's next state in ascending agent order, one uniform draw each.
  std::size_t sample_next(std::size_t g, const std::vector<std::size_t>& actions, Rng& rng) const;

  /// Largest |r_i(s_i, a_i)| over all tables.
  double r_max() const;
  /// Max deviation of any conditional row sum from 1.
  double max_row_error() const;
  /// Uniform initial distribution over global states.
  std::vector<double> initial_distribution() const;

 private:
  std::size_t n_;
  std::size_t states_;
  std::size_t actions_;
  double gamma_;
  AgentGraph graph_;
  NeighborhoodIndex neighbors_;
  std::size_t global_states_;
  std::size_t joint_actions_;
  std::vector<std::size_t> stride_;
  std::vector<std::size_t> action_stride_;
  std::vector<std::vector<double>> transition_;
  std::vector<std::vector<double>> reward_;
};

/// Random instance: rows drawn uniform and normalised; rewards uniform in [0, r_max].
/// Throws std::invalid_argument when the global space is too large to enumerate.
TabularNetMdp tabular_random(std::size_t agents, std::size_t states, std::size_t actions, double gamma,
                             double r_max, Rng& rng);

/// Env adapter over a TabularNetMdp; local state is the single value s_i.
class TabularEnv final : public Env {
 public:
  TabularEnv(TabularNetMdp mdp, std::size_t horizon);

  std::string name() const override { return "tabular"; }
  const AgentGraph& graph() const override { return mdp_.graph(); }
  std::size_t state_dim() const override { return 1; }
  ActionSpace action_space() const override { return ActionSpace::discrete(mdp_.local_actions()); }
  std::size_t horizon() const override { return horizon_; }

  /// Draws a uniform initial state, then seeds the env's private transition stream.
  GlobalState reset(Rng& rng) override;
  /// Starts from a given global state with a given transition stream.
  GlobalState reset_to(std::size_t g, Rng stream);
  Transition step(const JointAction& actions) override;
  const GlobalState& state() const override { return observation_; }

  const TabularNetMdp& mdp() const { return mdp_; }
  std::size_t global_index() const { return g_; }

  GlobalState to_state(std::size_t g) const;
  std::size_t to_index(const GlobalState& s) const;

 private:
  TabularNetMdp mdp_;
  std::size_t horizon_;
  std::size_t g_ = 0;
  std::size_t t_ = 0;
  Rng stream_;
  GlobalState observation_;
};

}  // namespace dmpo::envs
