#include "dmpo/envs/ring.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dmpo::envs {

double ring_gap(const RingState& s, std::size_t i) {
  const std::size_t n = s.position.size();
  if (n == 1) return s.length;
  double gap = s.position[(i + 1) % n] - s.position[i];
  if (gap < 0.0) gap += s.length;
  return gap;
}

RingStepResult ring_advance(const RingState& state, const std::vector<double>& accel, const RingConfig& config) {
  const std::size_t n = state.position.size();
  RingStepResult out;
  out.next = state;
  out.control.resize(n);
  out.reward.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double u = std::clamp(accel[i], -config.max_accel, config.max_accel);
    out.control[i] = u;
    double x = state.position[i] + state.velocity[i] * config.dt;
    x = std::fmod(x, state.length);
    if (x < 0.0) x += state.length;
    out.next.position[i] = x;
    out.next.velocity[i] = std::clamp(state.velocity[i] + u * config.dt, 0.0, config.max_velocity);
  }
  out.next.t = state.t + 1;
  const double vs = config.target_velocity;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(out.next.position[i]) || !std::isfinite(out.next.velocity[i])) {
      throw EnvError("ring integration produced a non-finite state");
    }
    double r = -std::abs(out.next.velocity[i] - vs) / vs - config.w_control * out.control[i] * out.control[i];
    if (n > 1 && ring_gap(out.next, i) <= config.min_gap) {
      r -= config.collision_penalty;
      out.collision = true;
    }
    out.reward[i] = r;
  }
  return out;
}

RingEnv::RingEnv(RingConfig config) : config_(config), graph_(AgentGraph::ring(std::max<std::size_t>(config.vehicles, 1))) {
  if (config_.vehicles == 0) throw std::invalid_argument("ring needs at least one vehicle");
  if (!(config_.length > 0.0)) throw std::invalid_argument("ring length must be positive");
  if (!(config_.dt > 0.0)) throw std::invalid_argument("ring dt must be positive");
  if (config_.horizon == 0) throw std::invalid_argument("ring horizon must be positive");
}

StateScaling RingEnv::scaling() const {
  double spacing = config_.length / static_cast<double>(config_.vehicles);
  return {{spacing, config_.target_velocity}, {spacing, config_.target_velocity}};
}

GlobalState RingEnv::reset(Rng& rng) {
  const std::size_t n = config_.vehicles;
  const double spacing = config_.length / static_cast<double>(n);
  physical_ = RingState{};
  physical_.length = config_.length;
  physical_.position.resize(n);
  physical_.velocity.assign(n, config_.init_velocity);
  double noise = std::min(config_.init_position_noise, 0.25 * spacing);
  for (std::size_t i = 0; i < n; ++i) {
    physical_.position[i] = static_cast<double>(i) * spacing + rng.uniform(-noise, noise);
    if (physical_.position[i] < 0.0) physical_.position[i] += config_.length;
  }
  observation_ = observe(physical_);
  return observation_;
}

Transition RingEnv::step(const JointAction& actions) {
  const std::size_t n = config_.vehicles;
  if (actions.size() != n) throw std::invalid_argument("ring step expects one action per vehicle");
  std::vector<double> accel(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!action_space().is_valid(actions[i])) throw std::invalid_argument("ring action must be one finite acceleration");
    accel[i] = actions[i][0];
  }
  auto result = ring_advance(physical_, accel, config_);
  Transition t;
  t.s = observation_;
  t.a = actions;
  physical_ = std::move(result.next);
  observation_ = observe(physical_);
  t.s_next = observation_;
  t.r = std::move(result.reward);
  t.d = result.collision || physical_.t >= config_.horizon;
  return t;
}

bool RingEnv::is_failure(const GlobalState& s) const {
  if (s.size() < 2) return false;
  return std::any_of(s.begin(), s.end(), [&](const LocalState& x) { return x[0] <= config_.min_gap; });
}

GlobalState RingEnv::observe(const RingState& s) const {
  GlobalState obs(s.position.size());
  for (std::size_t i = 0; i < obs.size(); ++i) obs[i] = {ring_gap(s, i), s.velocity[i]};
  return obs;
}

}  // namespace dmpo::envs
