#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dmpo/envs/tabular.hpp"
#include "dmpo/rng.hpp"
#include "dmpo/topology.hpp"

namespace dmpo::theory {

using envs::TabularNetMdp;

/// Per-agent softmax policy over the agent's 1-hop neighborhood state, one
/// logit per (neighborhood configuration, action).
class TabularPolicy {
 public:
  explicit TabularPolicy(const TabularNetMdp& mdp);
  static TabularPolicy random(const TabularNetMdp& mdp, double logit_scale, Rng& rng);

  std::size_t num_agents() const { return members_.size(); }
  std::size_t actions() const { return actions_; }
  const std::vector<std::size_t>& members(std::size_t i) const { return members_[i]; }
  std::size_t configs(std::size_t i) const { return configs_[i]; }
  std::size_t param_count(std::size_t i) const { return configs_[i] * actions_; }

  std::vector<double>& logits(std::size_t i) { return logits_[i]; }
  const std::vector<double>& logits(std::size_t i) const { return logits_[i]; }

  std::size_t code_of(const TabularNetMdp& mdp, std::size_t g, std::size_t i) const {
    return mdp.neighborhood_code(g, members_[i]);
  }
  /// pi_i(. | code) as a probability vector.
  std::vector<double> local_probs(std::size_t i, std::size_t code) const;
  /// pi(joint | g) = product of the local conditionals.
  double joint_prob(const TabularNetMdp& mdp, std::size_t g, std::size_t joint) const;

  /// Gradient of log pi_i(a | code) w.r.t. agent i's logit table (dense, param_count(i)).
  void score(std::size_t i, std::size_t code, std::size_t a, std::span<double> out) const;

 private:
  std::size_t actions_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::size_t> configs_;
  std::vector<std::vector<double>> logits_;
};

/// Global-state transition matrix under the policy, row-major G x G.
std::vector<double> policy_transition_matrix(const TabularNetMdp& mdp, const TabularPolicy& policy);
std::vector<double> policy_transition_matrix_reference(const TabularNetMdp& mdp, const TabularPolicy& policy);

/// Smallest H with gamma^H * r_max / (1 - gamma) < 1e-10 (at least 1).
std::size_t occupancy_horizon(double gamma, double r_max);

/// sum_{t<H} (1-gamma) gamma^t mu_t, renormalised to a probability vector.
std::vector<double> discounted_occupancy(std::span<const double> transition, std::span<const double> initial,
                                         double gamma, std::size_t horizon);
std::vector<double> discounted_occupancy_reference(std::span<const double> transition,
                                                   std::span<const double> initial, double gamma,
                                                   std::size_t horizon);

struct ExactSolution {
  std::vector<std::vector<double>> values;  // V_i(g), agent-major
  std::vector<double> global_value;         // (1/n) sum_i V_i(g)
  std::vector<std::vector<double>> q;       // Q_i(g * J + joint); empty when too large
  std::vector<double> transition;           // policy transition matrix
  std::vector<double> occupancy;
  double gamma = 0.0;
  double r_max = 0.0;
  std::size_t horizon = 0;
  double bellman_residual = 0.0;  // sup-norm over agents and states
};

/// Solves (I - gamma P_pi) V_i = r_i^pi for every agent by LU factorisation.
ExactSolution solve_exact_values(const TabularNetMdp& mdp, const TabularPolicy& policy);

enum class Measure { occupancy, uniform };
Measure parse_measure(const std::string& name);
std::string measure_name(Measure m);

/// V_i(s_{N_i^kappa}) expanded over global states: the conditional
/// expectation of V_i over the states sharing agent i's projection.
std::vector<std::vector<double>> extended_values(const TabularNetMdp& mdp, const ExactSolution& sol,
                                                 const NeighborhoodIndex& index, Measure measure);

/// Per agent: max over projection classes of (max V_i - min V_i) within the class.
std::vector<double> truncation_spread(const TabularNetMdp& mdp, const ExactSolution& sol,
                                      const NeighborhoodIndex& index);

double theorem1_bound(double r_max, double gamma, std::size_t kappa);
double theorem2_bound(double r_max, double gamma, std::size_t kappa, std::size_t neighborhood_size,
                      std::size_t n, double g_max);

struct BoundRow {
  std::string theorem;  // "1", "1-remark" or "2"
  std::uint64_t seed = 0;
  long agent = -1;      // -1: whole system
  std::size_t kappa = 0;
  double measured = 0.0;
  double bound = 0.0;
  double margin = 0.0;
  bool pass = false;
  double r_max = 0.0;
  double gamma = 0.0;
  std::size_t neighborhood_size = 0;
  std::size_t n = 0;
  double g_max = 0.0;
};

struct BoundReport {
  std::vector<BoundRow> rows;
  std::string measure;
  std::size_t horizon = 0;
  bool all_pass() const;
  void append(const BoundReport& other);
};

BoundReport theorem1_check(const TabularNetMdp& mdp, const TabularPolicy& policy,
                           std::span<const std::size_t> kappas, Measure measure = Measure::occupancy,
                           std::uint64_t seed = 0);

enum class GradientMode { full, truncated };

/// Exact E_d[A grad log pi_i] per agent with d the normalised discounted
/// occupancy from the uniform initial distribution. Truncated mode uses the
/// kappa-hop mixed extended values and neighborhood rewards.
std::vector<std::vector<double>> exact_policy_gradient(const TabularNetMdp& mdp, const TabularPolicy& policy,
                                                       const ExactSolution& sol, GradientMode mode,
                                                       std::size_t kappa = 0, Measure measure = Measure::occupancy);

/// Max L2 norm of the score over agents, neighborhood configurations and actions.
double score_bound(const TabularPolicy& policy);

BoundReport theorem2_check(const TabularNetMdp& mdp, const TabularPolicy& policy,
                           std::span<const std::size_t> kappas, Measure measure = Measure::occupancy,
                           std::uint64_t seed = 0);

struct SuiteConfig {
  std::size_t instances = 20;
  std::size_t agents = 4;
  std::size_t states = 2;
  std::size_t actions = 2;
  double gamma = 0.9;
  double r_max = 1.0;
  std::vector<std::size_t> kappas_value{0, 1, 2, 3};
  std::vector<std::size_t> kappas_gradient{1, 2, 3};
  double logit_scale = 1.0;
  Measure measure = Measure::occupancy;
  std::uint64_t base_seed = 0;
};

/// Random chain instances seeded base_seed, base_seed+1, ...; each gets a random softmax policy.
struct SuiteInstance {
  TabularNetMdp mdp;
  TabularPolicy policy;
};
SuiteInstance make_instance(const SuiteConfig& config, std::uint64_t seed);

/// Both theorem checks over the whole suite.
BoundReport run_suite(const SuiteConfig& config);

/// CSV: theorem, seed, agent, kappa, measured, bound, margin, pass, r_max, gamma, neighborhood_size, n, g_max, measure.
void write_bound_csv(std::ostream& out, const BoundReport& report);

}  // namespace dmpo::theory
