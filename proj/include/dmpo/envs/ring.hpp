#pragma once

#include <string>
#include <vector>

#include "dmpo/mdp.hpp"

namespace dmpo::envs {

struct RingConfig {
  std::size_t vehicles = 22;
  double length = 230.0;         // ring circumference, m
  double dt = 0.1;
  std::size_t horizon = 400;
  double target_velocity = 5.0;  // v*
  double max_velocity = 15.0;
  double max_accel = 1.0;        // actions clipped to [-max_accel, max_accel]
  double w_control = 0.01;
  double min_gap = 5.0;          // s_min; collision when the gap reaches it
  double collision_penalty = 100.0;
  double init_position_noise = 1.0;  // uniform +- m around even spacing
  double init_velocity = 0.0;
};

/// Positions along the ring arc; vehicle i follows vehicle i+1 (mod n).
struct RingState {
  std::vector<double> position;
  std::vector<double> velocity;
  double length = 0.0;
  std::size_t t = 0;
};

/// Front gap of vehicle i, i.e. arc distance to vehicle i+1.
double ring_gap(const RingState& s, std::size_t i);

struct RingStepResult {
  RingState next;
  std::vector<double> control;
  std::vector<double> reward;
  bool collision = false;
};

RingStepResult ring_advance(const RingState& state, const std::vector<double>& accel, const RingConfig& config);

class RingEnv final : public Env {
 public:
  explicit RingEnv(RingConfig config);

  std::string name() const override { return "ring-attenuation"; }
  const AgentGraph& graph() const override { return graph_; }
  /// Local state: (front gap, velocity).
  std::size_t state_dim() const override { return 2; }
  ActionSpace action_space() const override { return ActionSpace::box(1, -config_.max_accel, config_.max_accel); }
  std::size_t horizon() const override { return config_.horizon; }
  StateScaling scaling() const override;

  GlobalState reset(Rng& rng) override;
  Transition step(const JointAction& actions) override;
  const GlobalState& state() const override { return observation_; }
  bool is_failure(const GlobalState& s) const override;

  const RingState& physical_state() const { return physical_; }
  const RingConfig& config() const { return config_; }

 private:
  GlobalState observe(const RingState& s) const;

  RingConfig config_;
  AgentGraph graph_;
  RingState physical_;
  GlobalState observation_;
};

}  // namespace dmpo::envs
