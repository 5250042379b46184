#pragma once
// Small fixtures shared by the unit tests.

#include <cmath>
#include <vector>

#include "dmpo/envs/tabular.hpp"
#include "dmpo/rollout.hpp"

namespace dmpo::test {

/// Samples from the true local tensors of a tabular MDP.
class TabularDynamics final : public Dynamics {
 public:
  explicit TabularDynamics(const envs::TabularNetMdp& mdp) : mdp_(mdp) {}
  StepPrediction predict(const GlobalState& s, const JointAction& a, Rng& rng) const override {
    const std::size_t n = mdp_.num_agents();
    std::vector<std::size_t> locals(n);
    std::vector<std::size_t> actions(n);
    StepPrediction out;
    for (std::size_t i = 0; i < n; ++i) {
      locals[i] = static_cast<std::size_t>(s[i][0]);
      actions[i] = static_cast<std::size_t>(a[i][0]);
      out.r.push_back(mdp_.reward(i, locals[i], actions[i]));
    }
    std::size_t next = mdp_.sample_next(mdp_.encode(locals), actions, rng);
    for (std::size_t i = 0; i < n; ++i) out.s_next.push_back({static_cast<double>(mdp_.local_of(next, i))});
    return out;
  }

 private:
  const envs::TabularNetMdp& mdp_;
};

class UniformPolicy final : public JointPolicy {
 public:
  UniformPolicy(std::size_t n, std::size_t choices) : n_(n), choices_(choices) {}
  JointSample act(const GlobalState&, Rng& rng) const override {
    JointSample s;
    for (std::size_t i = 0; i < n_; ++i) {
      s.action.push_back({static_cast<double>(rng.index(choices_))});
      s.log_prob.push_back(-std::log(static_cast<double>(choices_)));
    }
    return s;
  }

 private:
  std::size_t n_;
  std::size_t choices_;
};

/// Deterministic: agent i plays (s_i + i) mod 2 without touching the stream.
class FirstActionPolicy final : public JointPolicy {
 public:
  explicit FirstActionPolicy(std::size_t n) : n_(n) {}
  JointSample act(const GlobalState& s, Rng&) const override {
    JointSample out;
    for (std::size_t i = 0; i < n_; ++i) {
      out.action.push_back({static_cast<double>((static_cast<std::size_t>(s[i][0]) + i) % 2)});
      out.log_prob.push_back(0.0);
    }
    return out;
  }

 private:
  std::size_t n_;
};

/// Max relative error |a - b| / max(1, |a|, |b|)... scaled so tiny gradients compare absolutely.
inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace dmpo::test
