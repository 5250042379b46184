#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dmpo/mdp.hpp"
#include "dmpo/rng.hpp"

namespace dmpo {

struct JointSample {
  JointAction action;
  std::vector<double> log_prob;  // per agent
};

/// Product of per-agent local policies.
class JointPolicy {
 public:
  virtual ~JointPolicy() = default;
  virtual JointSample act(const GlobalState& s, Rng& rng) const = 0;
};

struct StepPrediction {
  GlobalState s_next;
  std::vector<double> r;
};

/// One-step transition source used for rollouts: learned local models or a known simulator.
class Dynamics {
 public:
  virtual ~Dynamics() = default;
  virtual StepPrediction predict(const GlobalState& s, const JointAction& a, Rng& rng) const = 0;
};

struct RolloutStep {
  Transition t;
  std::vector<double> log_prob;
};

struct RolloutResult {
  std::vector<std::vector<RolloutStep>> trajectories;  // one per start, in start order
  std::size_t truncated = 0;                            // trajectories cut short by a non-finite state
  std::size_t terminations = 0;                         // failure predicate firings (re-branched)
  std::size_t transitions() const;
};

struct RolloutOptions {
  /// Failure predicate on a predicted state; fires d = true.
  std::function<bool(const GlobalState&)> is_terminal;
  /// Fresh start state after a termination. Defaults to the trajectory's own start.
  std::function<GlobalState(Rng&)> rebranch;
};

/// Runs T policy/dynamics steps from each start. Each start draws from its own
/// child stream split off `rng` in start order, so the result does not depend
/// on how the starts are distributed over threads.
RolloutResult branched_rollout(const Dynamics& dynamics, const JointPolicy& policy, std::span<const GlobalState> starts,
                               std::size_t horizon, Rng& rng, const RolloutOptions& options = {});

/// Serial reference for branched_rollout.
RolloutResult branched_rollout_reference(const Dynamics& dynamics, const JointPolicy& policy,
                                         std::span<const GlobalState> starts, std::size_t horizon, Rng& rng,
                                         const RolloutOptions& options = {});

}  // namespace dmpo
