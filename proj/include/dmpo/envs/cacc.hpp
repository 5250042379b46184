#pragma once

#include <array>
#include <string>
#include <vector>

#include "dmpo/mdp.hpp"

namespace dmpo::envs {

/// Optimal-velocity-model parameters and reward targets for the platoon.
struct OvmParams {
  double headway_stop = 5.0;   // h_st, m
  double headway_go = 35.0;    // h_go, m
  double v_max = 30.0;         // m/s
  double dt = 0.1;             // s
  double target_headway = 20.0;
  double target_velocity = 15.0;

  void validate() const;
  /// Desired velocity for headway h: v_max/2 (1 - cos(pi (h - h_st)/(h_go - h_st))), clipped.
  double desired_velocity(double headway) const;
};

struct GainPair {
  double alpha = 0.0;
  double beta = 0.0;
};

enum class CaccScenario { catchup, slowdown };

struct CaccConfig {
  CaccScenario scenario = CaccScenario::catchup;
  std::size_t vehicles = 8;
  std::size_t horizon = 600;            // Euler steps per episode
  std::size_t decision_interval = 1;    // Euler steps per env step; the gains are held in between
  OvmParams ovm;
  std::vector<GainPair> gain_menu{{0.0, 0.0}, {0.5, 0.0}, {0.0, 0.5}, {0.5, 0.5}};
  double w_velocity = 1.0;
  double w_control = 0.01;
  double collision_headway = 1.0;   // h_min
  double collision_penalty = 100.0;
  // Observation bounds.
  double max_headway = 100.0;
  double max_accel = 10.0;
  // Initial conditions (frozen constants, not calibrated against any external simulator).
  double catchup_leader_velocity = 15.0;
  double catchup_leader_headway = 20.0;
  double catchup_follower_velocity = 12.0;
  double catchup_follower_headway = 30.0;
  double slowdown_velocity = 20.0;
  double slowdown_headway = 25.0;
  double slowdown_decel = 0.5;      // lead-vehicle deceleration, m/s^2
  double init_headway_noise = 0.5;  // uniform +- m
  double init_velocity_noise = 0.2; // uniform +- m/s
};

CaccScenario parse_cacc_scenario(const std::string& name);

/// Physical platoon state. Vehicle 0 follows a scripted lead vehicle that is
/// not an agent.
struct CaccState {
  std::vector<double> headway;
  std::vector<double> velocity;
  std::vector<double> accel;
  double lead_velocity = 0.0;
  std::size_t t = 0;
};

struct CaccStepResult {
  CaccState next;
  std::vector<double> control;  // u_i actually applied
  std::vector<double> reward;
  bool collision = false;
};

/// One Euler step of the OVM platoon under per-vehicle gain pairs. Pure function.
CaccStepResult cacc_advance(const CaccState& state, const std::vector<GainPair>& gains,
                            double next_lead_velocity, const CaccConfig& config);

/// Per-vehicle reward for the post-step state and applied control.
double cacc_reward(double headway, double velocity, double control, const CaccConfig& config);

class CaccEnv final : public Env {
 public:
  explicit CaccEnv(CaccConfig config);

  std::string name() const override;
  const AgentGraph& graph() const override { return graph_; }
  std::size_t state_dim() const override { return 3; }
  ActionSpace action_space() const override { return ActionSpace::discrete(config_.gain_menu.size()); }
  /// Env steps per episode: horizon / decision_interval, rounded up.
  std::size_t horizon() const override;
  StateScaling scaling() const override;

  GlobalState reset(Rng& rng) override;
  /// Holds the selected gains for decision_interval Euler steps; the reward is
  /// the sum over those steps. Stops early on a collision.
  Transition step(const JointAction& actions) override;
  const GlobalState& state() const override { return observation_; }
  bool is_failure(const GlobalState& s) const override;

  const CaccState& physical_state() const { return physical_; }
  const CaccConfig& config() const { return config_; }
  /// Scripted lead-vehicle velocity at step t.
  double lead_velocity(std::size_t t) const;

 private:
  GlobalState observe(const CaccState& s) const;

  CaccConfig config_;
  AgentGraph graph_;
  CaccState physical_;
  GlobalState observation_;
};

}  // namespace dmpo::envs
