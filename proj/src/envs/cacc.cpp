#include "dmpo/envs/cacc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dmpo::envs {

void OvmParams::validate() const {
  if (!(headway_stop < headway_go)) throw std::invalid_argument("OVM requires headway_stop < headway_go");
  if (!(v_max > 0.0)) throw std::invalid_argument("OVM requires v_max > 0");
  if (!(dt > 0.0)) throw std::invalid_argument("OVM requires dt > 0");
}

double OvmParams::desired_velocity(double headway) const {
  double x = std::clamp((headway - headway_stop) / (headway_go - headway_stop), 0.0, 1.0);
  double v = 0.5 * v_max * (1.0 - std::cos(std::numbers::pi * x));
  return std::clamp(v, 0.0, v_max);
}

CaccScenario parse_cacc_scenario(const std::string& name) {
  if (name == "catchup" || name == "cacc-catchup") return CaccScenario::catchup;
  if (name == "slowdown" || name == "cacc-slowdown") return CaccScenario::slowdown;
  throw std::invalid_argument("unknown CACC scenario '" + name + "' (expected catchup or slowdown)");
}

double cacc_reward(double headway, double velocity, double control, const CaccConfig& config) {
  const double hs = config.ovm.target_headway;
  const double vs = config.ovm.target_velocity;
  double dh = (headway - hs) / hs;
  double dv = (velocity - vs) / vs;
  double r = -dh * dh - config.w_velocity * dv * dv - config.w_control * control * control;
  if (headway <= config.collision_headway) r -= config.collision_penalty;
  return r;
}

CaccStepResult cacc_advance(const CaccState& state, const std::vector<GainPair>& gains,
                            double next_lead_velocity, const CaccConfig& config) {
  const std::size_t n = state.velocity.size();
  const OvmParams& ovm = config.ovm;
  CaccStepResult out;
  out.next = state;
  out.control.resize(n);
  out.reward.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v_prev = i == 0 ? state.lead_velocity : state.velocity[i - 1];
    double v = state.velocity[i];
    double h = state.headway[i];
    double u = gains[i].alpha * (ovm.desired_velocity(h) - v) + gains[i].beta * (v_prev - v);
    out.control[i] = u;
    out.next.velocity[i] = std::clamp(v + u * ovm.dt, 0.0, ovm.v_max);
    out.next.headway[i] = h + (v_prev - v) * ovm.dt;
    out.next.accel[i] = u;
  }
  out.next.lead_velocity = next_lead_velocity;
  out.next.t = state.t + 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(out.next.headway[i]) || !std::isfinite(out.next.velocity[i]) ||
        !std::isfinite(out.control[i])) {
      throw EnvError("CACC integration produced a non-finite state");
    }
    out.reward[i] = cacc_reward(out.next.headway[i], out.next.velocity[i], out.control[i], config);
    if (out.next.headway[i] <= config.collision_headway) out.collision = true;
  }
  return out;
}

CaccEnv::CaccEnv(CaccConfig config) : config_(std::move(config)), graph_(AgentGraph::chain(config_.vehicles)) {
  config_.ovm.validate();
  if (config_.gain_menu.empty()) throw std::invalid_argument("CACC gain menu is empty");
  if (config_.horizon == 0) throw std::invalid_argument("CACC horizon must be positive");
  if (config_.decision_interval == 0) throw std::invalid_argument("CACC decision interval must be positive");
}

std::size_t CaccEnv::horizon() const {
  return (config_.horizon + config_.decision_interval - 1) / config_.decision_interval;
}

std::string CaccEnv::name() const {
  return config_.scenario == CaccScenario::catchup ? "cacc-catchup" : "cacc-slowdown";
}

StateScaling CaccEnv::scaling() const {
  return {{config_.ovm.target_headway, config_.ovm.target_velocity, 0.0},
          {config_.ovm.target_headway, config_.ovm.target_velocity, 2.0}};
}

double CaccEnv::lead_velocity(std::size_t t) const {
  if (config_.scenario == CaccScenario::catchup) return config_.catchup_leader_velocity;
  double v = config_.slowdown_velocity - config_.slowdown_decel * config_.ovm.dt * static_cast<double>(t);
  return std::max(v, config_.ovm.target_velocity);
}

GlobalState CaccEnv::reset(Rng& rng) {
  const std::size_t n = config_.vehicles;
  physical_ = CaccState{};
  physical_.headway.resize(n);
  physical_.velocity.resize(n);
  physical_.accel.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double h = 0.0;
    double v = 0.0;
    if (config_.scenario == CaccScenario::catchup) {
      h = i == 0 ? config_.catchup_leader_headway : config_.catchup_follower_headway;
      v = i == 0 ? config_.catchup_leader_velocity : config_.catchup_follower_velocity;
    } else {
      h = config_.slowdown_headway;
      v = config_.slowdown_velocity;
    }
    physical_.headway[i] = h + rng.uniform(-config_.init_headway_noise, config_.init_headway_noise);
    // Slow-down starts from a uniform platoon velocity; only headways are perturbed.
    if (config_.scenario == CaccScenario::catchup) {
      v += rng.uniform(-config_.init_velocity_noise, config_.init_velocity_noise);
    }
    physical_.velocity[i] = v;
  }
  physical_.lead_velocity = lead_velocity(0);
  observation_ = observe(physical_);
  return observation_;
}

Transition CaccEnv::step(const JointAction& actions) {
  const std::size_t n = config_.vehicles;
  if (actions.size() != n) throw std::invalid_argument("CACC step expects one action per vehicle");
  std::vector<GainPair> gains(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!action_space().is_valid(actions[i])) throw std::invalid_argument("CACC action is not a valid gain index");
    gains[i] = config_.gain_menu[static_cast<std::size_t>(actions[i][0])];
  }
  Transition t;
  t.s = observation_;
  t.a = actions;
  t.r.assign(n, 0.0);
  bool collision = false;
  for (std::size_t k = 0; k < config_.decision_interval && !collision && physical_.t < config_.horizon; ++k) {
    auto result = cacc_advance(physical_, gains, lead_velocity(physical_.t + 1), config_);
    physical_ = std::move(result.next);
    for (std::size_t i = 0; i < n; ++i) t.r[i] += result.reward[i];
    collision = result.collision;
  }
  observation_ = observe(physical_);
  t.s_next = observation_;
  t.d = collision || physical_.t >= config_.horizon;
  return t;
}

bool CaccEnv::is_failure(const GlobalState& s) const {
  return std::any_of(s.begin(), s.end(), [&](const LocalState& x) { return x[0] <= config_.collision_headway; });
}

GlobalState CaccEnv::observe(const CaccState& s) const {
  GlobalState obs(s.headway.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    obs[i] = {std::clamp(s.headway[i], 0.0, config_.max_headway), std::clamp(s.velocity[i], 0.0, config_.ovm.v_max),
              std::clamp(s.accel[i], -config_.max_accel, config_.max_accel)};
  }
  return obs;
}

}  // namespace dmpo::envs
