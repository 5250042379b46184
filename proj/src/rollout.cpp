#include "dmpo/rollout.hpp"

#include <cmath>
#include <stdexcept>

#include "dmpo/parallel.hpp"

namespace dmpo {

std::size_t RolloutResult::transitions() const {
  std::size_t total = 0;
  for (const auto& traj : trajectories) total += traj.size();
  return total;
}

namespace {

bool all_finite(const GlobalState& s) {
  for (const auto& x : s) {
    for (double v : x) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

struct TrajectoryOutcome {
  std::vector<RolloutStep> steps;
  bool truncated = false;
  std::size_t terminations = 0;
};

TrajectoryOutcome run_one(const Dynamics& dynamics, const JointPolicy& policy, const GlobalState& start,
                          std::size_t horizon, Rng rng, const RolloutOptions& options) {
  TrajectoryOutcome out;
  out.steps.reserve(horizon);
  GlobalState s = start;
  for (std::size_t t = 0; t < horizon; ++t) {
    RolloutStep step;
    StepPrediction pred;
    try {
      JointSample sample = policy.act(s, rng);
      pred = dynamics.predict(s, sample.action, rng);
      step.t.a = std::move(sample.action);
      step.log_prob = std::move(sample.log_prob);
    } catch (const std::domain_error&) {
      out.truncated = true;
      break;
    }
    bool finite = all_finite(pred.s_next);
    for (double r : pred.r) finite = finite && std::isfinite(r);
    if (!finite) {
      out.truncated = true;
      break;
    }
    step.t.s = s;
    step.t.s_next = pred.s_next;
    step.t.r = std::move(pred.r);
    step.t.d = options.is_terminal && options.is_terminal(step.t.s_next);
    if (step.t.d) {
      ++out.terminations;
      s = options.rebranch ? options.rebranch(rng) : start;
    } else {
      s = std::move(pred.s_next);
    }
    out.steps.push_back(std::move(step));
  }
  return out;
}

RolloutResult collect(std::vector<TrajectoryOutcome>& outcomes) {
  RolloutResult result;
  result.trajectories.reserve(outcomes.size());
  for (auto& o : outcomes) {
    if (o.truncated) ++result.truncated;
    result.terminations += o.terminations;
    result.trajectories.push_back(std::move(o.steps));
  }
  return result;
}

std::vector<Rng> child_streams(std::size_t count, Rng& rng) {
  std::vector<Rng> streams;
  streams.reserve(count);
  for (std::size_t k = 0; k < count; ++k) streams.push_back(rng.split());
  return streams;
}

}  // namespace

RolloutResult branched_rollout(const Dynamics& dynamics, const JointPolicy& policy, std::span<const GlobalState> starts,
                               std::size_t horizon, Rng& rng, const RolloutOptions& options) {
  if (horizon == 0) throw std::invalid_argument("rollout length must be at least 1");
  auto streams = child_streams(starts.size(), rng);
  std::vector<TrajectoryOutcome> outcomes(starts.size());
  const bool parallel = starts.size() > 1 && !in_parallel_region();
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::size_t k = 0; k < starts.size(); ++k) {
    outcomes[k] = run_one(dynamics, policy, starts[k], horizon, streams[k], options);
  }
  return collect(outcomes);
}

RolloutResult branched_rollout_reference(const Dynamics& dynamics, const JointPolicy& policy,
                                         std::span<const GlobalState> starts, std::size_t horizon, Rng& rng,
                                         const RolloutOptions& options) {
  if (horizon == 0) throw std::invalid_argument("rollout length must be at least 1");
  auto streams = child_streams(starts.size(), rng);
  std::vector<TrajectoryOutcome> outcomes;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    outcomes.push_back(run_one(dynamics, policy, starts[k], horizon, streams[k], options));
  }
  return collect(outcomes);
}

}  // namespace dmpo
