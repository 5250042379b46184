#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmpo/rng.hpp"
#include "dmpo/topology.hpp"

namespace dmpo {

using AgentAction = std::vector<double>;
using JointAction = std::vector<AgentAction>;

/// Discrete actions are stored as a single value holding the index.
struct ActionSpace {
  enum class Kind { discrete, box };

  Kind kind = Kind::discrete;
  std::size_t size = 1;  // choice count (discrete) or dimension (box)
  double low = -1.0;
  double high = 1.0;

  static ActionSpace discrete(std::size_t choices) { return {Kind::discrete, choices, 0.0, 0.0}; }
  static ActionSpace box(std::size_t dim, double lo, double hi) { return {Kind::box, dim, lo, hi}; }

  std::size_t stored_dim() const { return kind == Kind::discrete ? 1 : size; }
  /// One-hot for discrete, clipped values for box.
  std::size_t encoding_dim() const { return size; }
  void encode(std::span<const double> action, double* out) const;
  bool is_valid(std::span<const double> action) const;
};

/// Affine input scaling for networks: (x - offset) / scale, per local state dimension.
struct StateScaling {
  std::vector<double> offset;
  std::vector<double> scale;
};

struct Transition {
  GlobalState s;
  JointAction a;
  GlobalState s_next;
  std::vector<double> r;
  bool d = false;

  std::size_t num_agents() const { return r.size(); }
  /// Mean of the per-agent rewards.
  double global_reward() const;
};

struct EnvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Networked environment contract shared by the simulators and the tabular MDP.
class Env {
 public:
  virtual ~Env() = default;

  virtual std::string name() const = 0;
  virtual const AgentGraph& graph() const = 0;
  std::size_t num_agents() const { return graph().size(); }
  virtual std::size_t state_dim() const = 0;
  virtual ActionSpace action_space() const = 0;
  virtual std::size_t horizon() const = 0;
  virtual StateScaling scaling() const;

  virtual GlobalState reset(Rng& rng) = 0;
  /// Advances one step. Sets d when the episode ends (failure or horizon).
  virtual Transition step(const JointAction& actions) = 0;
  virtual const GlobalState& state() const = 0;

  /// Failure predicate on an observed state; also used to end model rollouts.
  virtual bool is_failure(const GlobalState& /*s*/) const { return false; }
};

/// Throws std::invalid_argument when shapes disagree with the env or rewards are non-finite.
void validate_transition(const Transition& t, std::size_t n, std::size_t state_dim,
                         std::size_t action_dim);

/// Sum of gamma^t r_t.
double discounted_return(std::span<const double> rewards, double gamma);

/// One JSON object per line with keys step, s, a, r, s_next, d.
void write_trace_jsonl(std::ostream& out, std::span<const Transition> trace);
std::vector<Transition> read_trace_jsonl(std::istream& in);

}  // namespace dmpo
