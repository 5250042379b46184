#include "dmpo/theory/oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "dmpo/parallel.hpp"

namespace dmpo::theory {

namespace {

constexpr std::size_t kMaxQEntries = std::size_t{1} << 22;

std::size_t power(std::size_t base, std::size_t exp) {
  std::size_t out = 1;
  for (std::size_t k = 0; k < exp; ++k) out *= base;
  return out;
}

// Row g of the policy transition matrix, via the per-agent factorisation
// P(g'|g) = prod_i sum_a pi_i(a|g) P_i(g'_i | g_{N_i}, a).
void transition_row(const TabularNetMdp& mdp, const TabularPolicy& policy, std::size_t g, std::span<double> row) {
  const std::size_t n = mdp.num_agents();
  const std::size_t S = mdp.local_states();
  std::vector<std::vector<double>> marg(n, std::vector<double>(S, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    auto pi = policy.local_probs(i, policy.code_of(mdp, g, i));
    const std::size_t code = mdp.neighborhood_code(g, mdp.neighbors().members(i));
    for (std::size_t a = 0; a < mdp.local_actions(); ++a) {
      for (std::size_t k = 0; k < S; ++k) marg[i][k] += pi[a] * mdp.local_prob(i, code, a, k);
    }
  }
  for (std::size_t gn = 0; gn < row.size(); ++gn) {
    double p = 1.0;
    for (std::size_t i = 0; i < n; ++i) p *= marg[i][mdp.local_of(gn, i)];
    row[gn] = p;
  }
}

// Distribution of the next global state for a fixed joint action.
void next_distribution(const TabularNetMdp& mdp, std::size_t g, std::size_t joint, std::vector<double>& out) {
  const std::size_t n = mdp.num_agents();
  const std::size_t G = mdp.global_states();
  out.assign(G, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t code = mdp.neighborhood_code(g, mdp.neighbors().members(i));
    const std::size_t a = mdp.local_action_of(joint, i);
    for (std::size_t gn = 0; gn < G; ++gn) out[gn] *= mdp.local_prob(i, code, a, mdp.local_of(gn, i));
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

}  // namespace

TabularPolicy::TabularPolicy(const TabularNetMdp& mdp) : actions_(mdp.local_actions()) {
  const std::size_t n = mdp.num_agents();
  members_.resize(n);
  configs_.resize(n);
  logits_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    members_[i] = mdp.neighbors().members(i);
    configs_[i] = power(mdp.local_states(), members_[i].size());
    logits_[i].assign(configs_[i] * actions_, 0.0);
  }
}

TabularPolicy TabularPolicy::random(const TabularNetMdp& mdp, double logit_scale, Rng& rng) {
  TabularPolicy p(mdp);
  for (auto& table : p.logits_) {
    for (double& x : table) x = rng.uniform(-logit_scale, logit_scale);
  }
  return p;
}

std::vector<double> TabularPolicy::local_probs(std::size_t i, std::size_t code) const {
  const double* row = logits_[i].data() + code * actions_;
  double m = *std::max_element(row, row + actions_);
  std::vector<double> p(actions_);
  double sum = 0.0;
  for (std::size_t a = 0; a < actions_; ++a) {
    p[a] = std::exp(row[a] - m);
    sum += p[a];
  }
  for (double& x : p) x /= sum;
  return p;
}

double TabularPolicy::joint_prob(const TabularNetMdp& mdp, std::size_t g, std::size_t joint) const {
  double p = 1.0;
  for (std::size_t i = 0; i < members_.size(); ++i) {
    p *= local_probs(i, code_of(mdp, g, i))[mdp.local_action_of(joint, i)];
  }
  return p;
}

void TabularPolicy::score(std::size_t i, std::size_t code, std::size_t a, std::span<double> out) const {
  if (out.size() != param_count(i)) throw std::invalid_argument("score buffer has wrong size");
  std::fill(out.begin(), out.end(), 0.0);
  auto p = local_probs(i, code);
  for (std::size_t b = 0; b < actions_; ++b) out[code * actions_ + b] = (b == a ? 1.0 : 0.0) - p[b];
}

std::vector<double> policy_transition_matrix(const TabularNetMdp& mdp, const TabularPolicy& policy) {
  const std::size_t G = mdp.global_states();
  std::vector<double> P(G * G);
#pragma omp parallel for schedule(static) if (G > 1 && !in_parallel_region())
  for (std::size_t g = 0; g < G; ++g) transition_row(mdp, policy, g, std::span<double>(P.data() + g * G, G));
  return P;
}

std::vector<double> policy_transition_matrix_reference(const TabularNetMdp& mdp, const TabularPolicy& policy) {
  const std::size_t G = mdp.global_states();
  const std::size_t J = mdp.joint_actions();
  std::vector<double> P(G * G, 0.0);
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t joint = 0; joint < J; ++joint) {
      const double pj = policy.joint_prob(mdp, g, joint);
      for (std::size_t gn = 0; gn < G; ++gn) P[g * G + gn] += pj * mdp.global_prob(g, joint, gn);
    }
  }
  return P;
}

std::size_t occupancy_horizon(double gamma, double r_max) {
  if (gamma <= 0.0 || r_max <= 0.0) return 1;
  const double target = 1e-10 * (1.0 - gamma) / r_max;
  if (target >= 1.0) return 1;
  return static_cast<std::size_t>(std::floor(std::log(target) / std::log(gamma))) + 1;
}

std::vector<double> discounted_occupancy(std::span<const double> transition, std::span<const double> initial,
                                         double gamma, std::size_t horizon) {
  const std::size_t G = initial.size();
  if (transition.size() != G * G) throw std::invalid_argument("transition matrix does not match the distribution");
  std::vector<double> mu(initial.begin(), initial.end());
  std::vector<double> next(G);
  std::vector<double> d(G, 0.0);
  double weight = 1.0 - gamma;
  double mass = 0.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    for (std::size_t g = 0; g < G; ++g) d[g] += weight * mu[g];
    mass += weight;
    // Column blocks per thread so the inner loop walks rows contiguously.
    constexpr std::size_t kBlock = 256;
    const std::size_t blocks = (G + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static) if (blocks > 1 && !in_parallel_region())
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::size_t lo = b * kBlock;
      const std::size_t hi = std::min(G, lo + kBlock);
      std::fill(next.begin() + static_cast<std::ptrdiff_t>(lo), next.begin() + static_cast<std::ptrdiff_t>(hi), 0.0);
      for (std::size_t g = 0; g < G; ++g) {
        const double m = mu[g];
        if (m == 0.0) continue;
        const double* row = transition.data() + g * G;
        for (std::size_t gn = lo; gn < hi; ++gn) next[gn] += m * row[gn];
      }
    }
    mu.swap(next);
    weight *= gamma;
  }
  for (double& x : d) x /= mass;
  return d;
}

std::vector<double> discounted_occupancy_reference(std::span<const double> transition,
                                                   std::span<const double> initial, double gamma,
                                                   std::size_t horizon) {
  const std::size_t G = initial.size();
  if (transition.size() != G * G) throw std::invalid_argument("transition matrix does not match the distribution");
  std::vector<double> mu(initial.begin(), initial.end());
  std::vector<double> d(G, 0.0);
  double weight = 1.0 - gamma;
  double mass = 0.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    for (std::size_t g = 0; g < G; ++g) d[g] += weight * mu[g];
    mass += weight;
    std::vector<double> next(G, 0.0);
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t gn = 0; gn < G; ++gn) next[gn] += mu[g] * transition[g * G + gn];
    }
    mu = std::move(next);
    weight *= gamma;
  }
  for (double& x : d) x /= mass;
  return d;
}

ExactSolution solve_exact_values(const TabularNetMdp& mdp, const TabularPolicy& policy) {
  const std::size_t n = mdp.num_agents();
  const std::size_t G = mdp.global_states();
  const std::size_t J = mdp.joint_actions();
  const double gamma = mdp.gamma();

  ExactSolution sol;
  sol.gamma = gamma;
  sol.r_max = mdp.r_max();
  sol.transition = policy_transition_matrix(mdp, policy);

  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(G), static_cast<Eigen::Index>(G));
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t gn = 0; gn < G; ++gn) {
      A(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(gn)) -= gamma * sol.transition[g * G + gn];
    }
  }
  Eigen::MatrixXd rhs(static_cast<Eigen::Index>(G), static_cast<Eigen::Index>(n));
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t i = 0; i < n; ++i) {
      auto pi = policy.local_probs(i, policy.code_of(mdp, g, i));
      double r = 0.0;
      for (std::size_t a = 0; a < mdp.local_actions(); ++a) r += pi[a] * mdp.reward(i, mdp.local_of(g, i), a);
      rhs(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(i)) = r;
    }
  }
  Eigen::MatrixXd V = A.partialPivLu().solve(rhs);

  sol.values.assign(n, std::vector<double>(G));
  sol.global_value.assign(G, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t g = 0; g < G; ++g) {
      sol.values[i][g] = V(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(i));
    }
  }
  for (std::size_t g = 0; g < G; ++g) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += sol.values[i][g];
    sol.global_value[g] = s / static_cast<double>(n);
  }

  double residual = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t g = 0; g < G; ++g) {
      double backup = rhs(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(i)) +
                      gamma * dot(std::span<const double>(sol.transition.data() + g * G, G), sol.values[i]);
      residual = std::max(residual, std::abs(backup - sol.values[i][g]));
    }
  }
  sol.bellman_residual = residual;

  if (G * J <= kMaxQEntries) {
    sol.q.assign(n, std::vector<double>(G * J));
    std::vector<double> next;
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t joint = 0; joint < J; ++joint) {
        next_distribution(mdp, g, joint, next);
        for (std::size_t i = 0; i < n; ++i) {
          sol.q[i][g * J + joint] = mdp.reward(i, mdp.local_of(g, i), mdp.local_action_of(joint, i)) +
                                    gamma * dot(next, sol.values[i]);
        }
      }
    }
  }

  sol.horizon = occupancy_horizon(gamma, sol.r_max);
  sol.occupancy = discounted_occupancy(sol.transition, mdp.initial_distribution(), gamma, sol.horizon);
  return sol;
}

Measure parse_measure(const std::string& name) {
  if (name == "occupancy") return Measure::occupancy;
  if (name == "uniform") return Measure::uniform;
  throw std::invalid_argument("unknown measure '" + name + "' (expected occupancy or uniform)");
}

std::string measure_name(Measure m) { return m == Measure::occupancy ? "occupancy" : "uniform"; }

std::vector<std::vector<double>> extended_values(const TabularNetMdp& mdp, const ExactSolution& sol,
                                                 const NeighborhoodIndex& index, Measure measure) {
  const std::size_t n = mdp.num_agents();
  const std::size_t G = mdp.global_states();
  std::vector<std::vector<double>> out(n, std::vector<double>(G));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& members = index.members(i);
    const std::size_t classes = power(mdp.local_states(), members.size());
    std::vector<double> wsum(classes, 0.0);
    std::vector<double> vsum(classes, 0.0);
    std::vector<double> usum(classes, 0.0);
    std::vector<double> count(classes, 0.0);
    for (std::size_t g = 0; g < G; ++g) {
      const std::size_t c = mdp.neighborhood_code(g, members);
      const double w = measure == Measure::occupancy ? sol.occupancy[g] : 1.0;
      wsum[c] += w;
      vsum[c] += w * sol.values[i][g];
      usum[c] += sol.values[i][g];
      count[c] += 1.0;
    }
    for (std::size_t g = 0; g < G; ++g) {
      const std::size_t c = mdp.neighborhood_code(g, members);
      out[i][g] = wsum[c] > 0.0 ? vsum[c] / wsum[c] : usum[c] / count[c];
    }
  }
  return out;
}

std::vector<double> truncation_spread(const TabularNetMdp& mdp, const ExactSolution& sol,
                                      const NeighborhoodIndex& index) {
  const std::size_t n = mdp.num_agents();
  const std::size_t G = mdp.global_states();
  std::vector<double> spread(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& members = index.members(i);
    const std::size_t classes = power(mdp.local_states(), members.size());
    std::vector<double> lo(classes, std::numeric_limits<double>::infinity());
    std::vector<double> hi(classes, -std::numeric_limits<double>::infinity());
    for (std::size_t g = 0; g < G; ++g) {
      const std::size_t c = mdp.neighborhood_code(g, members);
      lo[c] = std::min(lo[c], sol.values[i][g]);
      hi[c] = std::max(hi[c], sol.values[i][g]);
    }
    for (std::size_t c = 0; c < classes; ++c) {
      if (hi[c] >= lo[c]) spread[i] = std::max(spread[i], hi[c] - lo[c]);
    }
  }
  return spread;
}

double theorem1_bound(double r_max, double gamma, std::size_t kappa) {
  return r_max / (1.0 - gamma) * std::pow(gamma, static_cast<double>(kappa));
}

double theorem2_bound(double r_max, double gamma, std::size_t kappa, std::size_t neighborhood_size, std::size_t n,
                      double g_max) {
  const double frac = static_cast<double>(neighborhood_size) / static_cast<double>(n);
  return std::pow(gamma, static_cast<double>(kappa) - 1.0) / (1.0 - gamma) * (1.0 - (1.0 - gamma * gamma) * frac) *
         r_max * g_max;
}

bool BoundReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const BoundRow& r) { return r.pass; });
}

void BoundReport::append(const BoundReport& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  if (measure.empty()) measure = other.measure;
  horizon = std::max(horizon, other.horizon);
}

BoundReport theorem1_check(const TabularNetMdp& mdp, const TabularPolicy& policy, std::span<const std::size_t> kappas,
                           Measure measure, std::uint64_t seed) {
  const std::size_t n = mdp.num_agents();
  const std::size_t G = mdp.global_states();
  const ExactSolution sol = solve_exact_values(mdp, policy);
  BoundReport report;
  report.measure = measure_name(measure);
  report.horizon = sol.horizon;
  for (std::size_t kappa : kappas) {
    const auto index = kappa_neighborhood(mdp.graph(), kappa);
    const auto ext = extended_values(mdp, sol, index, measure);
    const double bound = theorem1_bound(sol.r_max, sol.gamma, kappa);
    std::vector<double> mixed(G, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double worst = 0.0;
      for (std::size_t g = 0; g < G; ++g) {
        worst = std::max(worst, std::abs(sol.values[i][g] - ext[i][g]));
        mixed[g] += ext[i][g] / static_cast<double>(n);
      }
      BoundRow row;
      row.theorem = "1";
      row.seed = seed;
      row.agent = static_cast<long>(i);
      row.kappa = kappa;
      row.measured = worst;
      row.bound = bound;
      row.margin = bound - worst;
      row.pass = worst <= bound;
      row.r_max = sol.r_max;
      row.gamma = sol.gamma;
      row.neighborhood_size = index.members(i).size();
      row.n = n;
      report.rows.push_back(row);
    }
    double worst = 0.0;
    for (std::size_t g = 0; g < G; ++g) worst = std::max(worst, std::abs(sol.global_value[g] - mixed[g]));
    BoundRow row;
    row.theorem = "1-remark";
    row.seed = seed;
    row.kappa = kappa;
    row.measured = worst;
    row.bound = bound;
    row.margin = bound - worst;
    row.pass = worst <= bound;
    row.r_max = sol.r_max;
    row.gamma = sol.gamma;
    row.neighborhood_size = n;
    row.n = n;
    report.rows.push_back(row);
  }
  return report;
}

std::vector<std::vector<double>> exact_policy_gradient(const TabularNetMdp& mdp, const TabularPolicy& policy,
                                                       const ExactSolution& sol, GradientMode mode,
                                                       std::size_t kappa, Measure measure) {
  const std::size_t n = mdp.num_agents();
  const std::size_t G = mdp.global_states();
  const std::size_t J = mdp.joint_actions();
  const double gamma = sol.gamma;
  const double inv_n = 1.0 / static_cast<double>(n);

  // Value tables entering each agent's TD residual, and which agents' terms agent i sums.
  std::vector<std::vector<double>> values = sol.values;
  std::vector<std::vector<std::size_t>> sums(n);
  if (mode == GradientMode::truncated) {
    const auto index = kappa_neighborhood(mdp.graph(), kappa);
    values = extended_values(mdp, sol, index, measure);
    for (std::size_t i = 0; i < n; ++i) sums[i] = index.members(i);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) sums[i].push_back(j);
    }
  }

  std::vector<std::vector<double>> grads(n);
  for (std::size_t i = 0; i < n; ++i) grads[i].assign(policy.param_count(i), 0.0);

  std::vector<double> next;
  std::vector<double> term(n);
  std::vector<std::vector<double>> pi(n);
  std::vector<std::size_t> codes(n);
  for (std::size_t g = 0; g < G; ++g) {
    const double dg = sol.occupancy[g];
    if (dg == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      codes[i] = policy.code_of(mdp, g, i);
      pi[i] = policy.local_probs(i, codes[i]);
    }
    for (std::size_t joint = 0; joint < J; ++joint) {
      double pj = 1.0;
      for (std::size_t i = 0; i < n; ++i) pj *= pi[i][mdp.local_action_of(joint, i)];
      if (pj == 0.0) continue;
      next_distribution(mdp, g, joint, next);
      // Per-agent TD term r_j + gamma E V_j(s') - V_j(s).
      for (std::size_t j = 0; j < n; ++j) {
        term[j] = mdp.reward(j, mdp.local_of(g, j), mdp.local_action_of(joint, j)) + gamma * dot(next, values[j]) -
                  values[j][g];
      }
      for (std::size_t i = 0; i < n; ++i) {
        double adv = 0.0;
        for (std::size_t j : sums[i]) adv += term[j];
        adv *= inv_n;
        const double w = dg * pj * adv;
        const std::size_t a = mdp.local_action_of(joint, i);
        double* row = grads[i].data() + codes[i] * policy.actions();
        for (std::size_t b = 0; b < policy.actions(); ++b) row[b] += w * ((b == a ? 1.0 : 0.0) - pi[i][b]);
      }
    }
  }
  return grads;
}

double score_bound(const TabularPolicy& policy) {
  double worst = 0.0;
  for (std::size_t i = 0; i < policy.num_agents(); ++i) {
    for (std::size_t code = 0; code < policy.configs(i); ++code) {
      auto p = policy.local_probs(i, code);
      for (std::size_t a = 0; a < policy.actions(); ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b < policy.actions(); ++b) {
          double e = (b == a ? 1.0 : 0.0) - p[b];
          s += e * e;
        }
        worst = std::max(worst, std::sqrt(s));
      }
    }
  }
  return worst;
}

BoundReport theorem2_check(const TabularNetMdp& mdp, const TabularPolicy& policy, std::span<const std::size_t> kappas,
                           Measure measure, std::uint64_t seed) {
  const std::size_t n = mdp.num_agents();
  const ExactSolution sol = solve_exact_values(mdp, policy);
  const double g_max = score_bound(policy);
  const auto full = exact_policy_gradient(mdp, policy, sol, GradientMode::full);
  BoundReport report;
  report.measure = measure_name(measure);
  report.horizon = sol.horizon;
  for (std::size_t kappa : kappas) {
    const auto index = kappa_neighborhood(mdp.graph(), kappa);
    const auto trunc = exact_policy_gradient(mdp, policy, sol, GradientMode::truncated, kappa, measure);
    for (std::size_t i = 0; i < n; ++i) {
      double worst = 0.0;
      for (std::size_t k = 0; k < full[i].size(); ++k) worst = std::max(worst, std::abs(full[i][k] - trunc[i][k]));
      BoundRow row;
      row.theorem = "2";
      row.seed = seed;
      row.agent = static_cast<long>(i);
      row.kappa = kappa;
      row.measured = worst;
      row.neighborhood_size = index.members(i).size();
      row.n = n;
      row.r_max = sol.r_max;
      row.gamma = sol.gamma;
      row.g_max = g_max;
      row.bound = theorem2_bound(sol.r_max, sol.gamma, kappa, row.neighborhood_size, n, g_max);
      row.margin = row.bound - worst;
      row.pass = worst <= row.bound;
      report.rows.push_back(row);
    }
  }
  return report;
}

SuiteInstance make_instance(const SuiteConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  auto mdp = envs::tabular_random(config.agents, config.states, config.actions, config.gamma, config.r_max, rng);
  auto policy = TabularPolicy::random(mdp, config.logit_scale, rng);
  return {std::move(mdp), std::move(policy)};
}

BoundReport run_suite(const SuiteConfig& config) {
  std::vector<BoundReport> parts(config.instances);
  const bool parallel = config.instances > 1 && !in_parallel_region();
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::size_t k = 0; k < config.instances; ++k) {
    const std::uint64_t seed = config.base_seed + k;
    auto inst = make_instance(config, seed);
    parts[k] = theorem1_check(inst.mdp, inst.policy, config.kappas_value, config.measure, seed);
    parts[k].append(theorem2_check(inst.mdp, inst.policy, config.kappas_gradient, config.measure, seed));
  }
  BoundReport report;
  report.measure = measure_name(config.measure);
  for (const auto& p : parts) report.append(p);
  return report;
}

void write_bound_csv(std::ostream& out, const BoundReport& report) {
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
  };
  out << "theorem,seed,agent,kappa,measured,bound,margin,pass,r_max,gamma,neighborhood_size,n,g_max,measure\n";
  for (const auto& r : report.rows) {
    out << r.theorem << ',' << r.seed << ',' << (r.agent < 0 ? std::string("all") : std::to_string(r.agent)) << ','
        << r.kappa << ',' << num(r.measured) << ',' << num(r.bound) << ',' << num(r.margin) << ','
        << (r.pass ? "true" : "false") << ',' << num(r.r_max) << ',' << num(r.gamma) << ',' << r.neighborhood_size
        << ',' << r.n << ',' << num(r.g_max) << ',' << report.measure << '\n';
  }
}

}  // namespace dmpo::theory
