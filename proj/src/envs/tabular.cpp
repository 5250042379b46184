#include "dmpo/envs/tabular.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dmpo::envs {

namespace {

std::size_t checked_power(std::size_t base, std::size_t exp, std::size_t limit) {
  std::size_t out = 1;
  for (std::size_t k = 0; k < exp; ++k) {
    if (out > limit / base) return limit + 1;
    out *= base;
  }
  return out;
}

}  // namespace

TabularNetMdp::TabularNetMdp(std::size_t agents, std::size_t states, std::size_t actions, double gamma)
    : n_(agents),
      states_(states),
      actions_(actions),
      gamma_(gamma),
      graph_(AgentGraph::chain(agents)),
      neighbors_(kappa_neighborhood(graph_, 1)) {
  if (states < 1 || actions < 1) throw std::invalid_argument("tabular MDP needs at least one state and action");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("tabular MDP needs gamma in [0, 1)");
  global_states_ = checked_power(states, agents, kMaxGlobalStates);
  if (global_states_ > kMaxGlobalStates) {
    throw std::invalid_argument("tabular MDP global state space exceeds " + std::to_string(kMaxGlobalStates) +
                                " states; too large to enumerate");
  }
  joint_actions_ = checked_power(actions, agents, std::size_t{1} << 20);
  stride_.resize(n_);
  action_stride_.resize(n_);
  std::size_t st = 1;
  std::size_t at = 1;
  for (std::size_t i = 0; i < n_; ++i) {
    stride_[i] = st;
    action_stride_[i] = at;
    st *= states_;
    at *= actions_;
  }
  transition_.resize(n_);
  reward_.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    transition_[i].assign(neighborhood_configs(i) * actions_ * states_, 0.0);
    reward_[i].assign(states_ * actions_, 0.0);
  }
}

std::size_t TabularNetMdp::encode(const std::vector<std::size_t>& locals) const {
  std::size_t g = 0;
  for (std::size_t i = 0; i < n_; ++i) g += locals.at(i) * stride_[i];
  return g;
}

std::vector<std::size_t> TabularNetMdp::decode(std::size_t g) const {
  std::vector<std::size_t> out(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i] = local_of(g, i);
  return out;
}

std::size_t TabularNetMdp::neighborhood_code(std::size_t g, const std::vector<std::size_t>& members) const {
  std::size_t code = 0;
  std::size_t mult = 1;
  for (std::size_t j : members) {
    code += local_of(g, j) * mult;
    mult *= states_;
  }
  return code;
}

std::size_t TabularNetMdp::neighborhood_configs(std::size_t i) const {
  std::size_t c = 1;
  for (std::size_t k = 0; k < neighbors_.members(i).size(); ++k) c *= states_;
  return c;
}

double TabularNetMdp::global_prob(std::size_t g, std::size_t joint, std::size_t g_next) const {
  double p = 1.0;
  for (std::size_t i = 0; i < n_; ++i) {
    p *= local_prob(i, neighborhood_code(g, neighbors_.members(i)), local_action_of(joint, i), local_of(g_next, i));
  }
  return p;
}

std::size_t TabularNetMdp::sample_next(std::size_t g, const std::vector<std::size_t>& actions, Rng& rng) const {
  std::size_t next = 0;
  for (std::size_t i = 0; i < n_; ++i) {
    std::size_t code = neighborhood_code(g, neighbors_.members(i));
    double u = rng.uniform();
    std::size_t pick = states_ - 1;
    double acc = 0.0;
    for (std::size_t k = 0; k < states_; ++k) {
      acc += local_prob(i, code, actions.at(i), k);
      if (u < acc) {
        pick = k;
        break;
      }
    }
    next += pick * stride_[i];
  }
  return next;
}

double TabularNetMdp::r_max() const {
  double m = 0.0;
  for (const auto& table : reward_) {
    for (double r : table) m = std::max(m, std::abs(r));
  }
  return m;
}

double TabularNetMdp::max_row_error() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t code = 0; code < neighborhood_configs(i); ++code) {
      for (std::size_t a = 0; a < actions_; ++a) {
        double sum = 0.0;
        for (std::size_t k = 0; k < states_; ++k) {
          double p = local_prob(i, code, a, k);
          if (p < 0.0) return std::numeric_limits<double>::infinity();
          sum += p;
        }
        worst = std::max(worst, std::abs(sum - 1.0));
      }
    }
  }
  return worst;
}

std::vector<double> TabularNetMdp::initial_distribution() const {
  return std::vector<double>(global_states_, 1.0 / static_cast<double>(global_states_));
}

TabularNetMdp tabular_random(std::size_t agents, std::size_t states, std::size_t actions, double gamma,
                             double r_max, Rng& rng) {
  TabularNetMdp mdp(agents, states, actions, gamma);
  for (std::size_t i = 0; i < agents; ++i) {
    for (std::size_t code = 0; code < mdp.neighborhood_configs(i); ++code) {
      for (std::size_t a = 0; a < actions; ++a) {
        double sum = 0.0;
        for (std::size_t k = 0; k < states; ++k) {
          double w = rng.uniform();
          mdp.local_prob_ref(i, code, a, k) = w;
          sum += w;
        }
        for (std::size_t k = 0; k < states; ++k) mdp.local_prob_ref(i, code, a, k) /= sum;
      }
    }
    for (std::size_t s = 0; s < states; ++s) {
      for (std::size_t a = 0; a < actions; ++a) mdp.reward_ref(i, s, a) = rng.uniform(0.0, r_max);
    }
  }
  return mdp;
}

TabularEnv::TabularEnv(TabularNetMdp mdp, std::size_t horizon) : mdp_(std::move(mdp)), horizon_(horizon) {
  if (horizon_ == 0) throw std::invalid_argument("tabular env horizon must be positive");
}

GlobalState TabularEnv::to_state(std::size_t g) const {
  GlobalState s(mdp_.num_agents());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = {static_cast<double>(mdp_.local_of(g, i))};
  return s;
}

std::size_t TabularEnv::to_index(const GlobalState& s) const {
  std::vector<std::size_t> locals(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) locals[i] = static_cast<std::size_t>(s[i].at(0));
  return mdp_.encode(locals);
}

GlobalState TabularEnv::reset(Rng& rng) {
  std::size_t g = rng.index(mdp_.global_states());
  return reset_to(g, rng.split());
}

GlobalState TabularEnv::reset_to(std::size_t g, Rng stream) {
  g_ = g;
  t_ = 0;
  stream_ = stream;
  observation_ = to_state(g_);
  return observation_;
}

Transition TabularEnv::step(const JointAction& actions) {
  const std::size_t n = mdp_.num_agents();
  if (actions.size() != n) throw std::invalid_argument("tabular step expects one action per agent");
  std::vector<std::size_t> a(n);
  Transition t;
  t.s = observation_;
  t.a = actions;
  t.r.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!action_space().is_valid(actions[i])) throw std::invalid_argument("tabular action out of range");
    a[i] = static_cast<std::size_t>(actions[i][0]);
    t.r[i] = mdp_.reward(i, mdp_.local_of(g_, i), a[i]);
  }
  g_ = mdp_.sample_next(g_, a, stream_);
  ++t_;
  observation_ = to_state(g_);
  t.s_next = observation_;
  t.d = t_ >= horizon_;
  return t;
}

}  // namespace dmpo::envs
