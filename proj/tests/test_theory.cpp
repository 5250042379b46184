#include <cmath>
#include <sstream>

#include "doctest.h"
#include "dmpo/theory/oracle.hpp"

using namespace dmpo;
using namespace dmpo::theory;

namespace {

SuiteConfig default_suite() { return SuiteConfig{}; }

/// V_i by plain fixed-point iteration on the enumerated kernel.
std::vector<std::vector<double>> iterate_values(const TabularNetMdp& mdp, const TabularPolicy& policy) {
  const std::size_t n = mdp.num_agents();
  const std::size_t G = mdp.global_states();
  const std::size_t J = mdp.joint_actions();
  std::vector<std::vector<double>> v(n, std::vector<double>(G, 0.0));
  for (int it = 0; it < 400; ++it) {
    auto next = v;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t g = 0; g < G; ++g) {
        double acc = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
          double pj = policy.joint_prob(mdp, g, j);
          double cont = 0.0;
          for (std::size_t h = 0; h < G; ++h) cont += mdp.global_prob(g, j, h) * v[i][h];
          acc += pj * (mdp.reward(i, mdp.local_of(g, i), mdp.local_action_of(j, i)) + mdp.gamma() * cont);
        }
        next[i][g] = acc;
      }
    }
    v = std::move(next);
  }
  return v;
}

double objective(const TabularNetMdp& mdp, const TabularPolicy& policy) {
  auto sol = solve_exact_values(mdp, policy);
  double j = 0.0;
  for (double v : sol.global_value) j += v / static_cast<double>(sol.global_value.size());
  return j;
}

}  // namespace

TEST_CASE("exact values satisfy the Bellman equation on the suite") {
  auto suite = default_suite();
  for (std::size_t k = 0; k < suite.instances; ++k) {
    auto inst = make_instance(suite, k);
    auto sol = solve_exact_values(inst.mdp, inst.policy);
    CHECK(sol.bellman_residual < 1e-10);
    for (std::size_t g = 0; g < inst.mdp.global_states(); ++g) {
      double mean = 0.0;
      for (const auto& vi : sol.values) mean += vi[g];
      mean /= static_cast<double>(sol.values.size());
      CHECK(std::abs(sol.global_value[g] - mean) <= 1e-12);
    }
  }
}

TEST_CASE("exact values match fixed-point iteration") {
  auto suite = default_suite();
  for (std::uint64_t seed : {0u, 7u}) {
    auto inst = make_instance(suite, seed);
    auto sol = solve_exact_values(inst.mdp, inst.policy);
    auto it = iterate_values(inst.mdp, inst.policy);
    for (std::size_t i = 0; i < it.size(); ++i) {
      for (std::size_t g = 0; g < it[i].size(); ++g) CHECK(sol.values[i][g] == doctest::Approx(it[i][g]).epsilon(1e-9));
    }
  }
}

TEST_CASE("expected TD residual of the true value is zero") {
  auto inst = make_instance(default_suite(), 3);
  const auto& mdp = inst.mdp;
  auto sol = solve_exact_values(mdp, inst.policy);
  for (std::size_t g = 0; g < mdp.global_states(); ++g) {
    double expected = 0.0;
    for (std::size_t j = 0; j < mdp.joint_actions(); ++j) {
      double pj = inst.policy.joint_prob(mdp, g, j);
      double cont = 0.0;
      for (std::size_t h = 0; h < mdp.global_states(); ++h) cont += mdp.global_prob(g, j, h) * sol.global_value[h];
      double r = 0.0;
      for (std::size_t i = 0; i < mdp.num_agents(); ++i) {
        r += mdp.reward(i, mdp.local_of(g, i), mdp.local_action_of(j, i)) / static_cast<double>(mdp.num_agents());
      }
      expected += pj * (r + mdp.gamma() * cont - sol.global_value[g]);
    }
    CHECK(std::abs(expected) < 1e-10);
  }
}

TEST_CASE("Monte-Carlo returns agree with the exact value") {
  auto inst = make_instance(default_suite(), 5);
  const auto& mdp = inst.mdp;
  auto sol = solve_exact_values(mdp, inst.policy);
  const std::size_t g0 = 6;
  const int episodes = 200000;
  const std::size_t horizon = 250;  // 0.9^250 is negligible
  Rng rng(42);
  double sum = 0.0;
  double sum2 = 0.0;
  std::vector<std::size_t> actions(mdp.num_agents());
  for (int e = 0; e < episodes; ++e) {
    std::size_t g = g0;
    double ret = 0.0;
    double disc = 1.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      double r = 0.0;
      for (std::size_t i = 0; i < mdp.num_agents(); ++i) {
        auto p = inst.policy.local_probs(i, inst.policy.code_of(mdp, g, i));
        double u = rng.uniform();
        std::size_t a = 0;
        while (a + 1 < p.size() && u >= p[a]) u -= p[a++];
        actions[i] = a;
        r += mdp.reward(i, mdp.local_of(g, i), a);
      }
      ret += disc * r / static_cast<double>(mdp.num_agents());
      disc *= mdp.gamma();
      g = mdp.sample_next(g, actions, rng);
    }
    sum += ret;
    sum2 += ret * ret;
  }
  double mean = sum / episodes;
  double se = std::sqrt((sum2 / episodes - mean * mean) / episodes);
  MESSAGE("MC " << mean << " exact " << sol.global_value[g0] << " se " << se);
  CHECK(std::abs(mean - sol.global_value[g0]) < 4.0 * se);
}

TEST_CASE("full exact gradient is the scaled derivative of the objective") {
  auto inst = make_instance(default_suite(), 2);
  const auto& mdp = inst.mdp;
  auto sol = solve_exact_values(mdp, inst.policy);
  auto grads = exact_policy_gradient(mdp, inst.policy, sol, GradientMode::full);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < mdp.num_agents(); ++i) {
    for (std::size_t k = 0; k < inst.policy.param_count(i); ++k) {
      auto& logit = inst.policy.logits(i)[k];
      const double saved = logit;
      logit = saved + h;
      double up = objective(mdp, inst.policy);
      logit = saved - h;
      double down = objective(mdp, inst.policy);
      logit = saved;
      double fd = (1.0 - mdp.gamma()) * (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - grads[i][k]));
    }
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("policy transition matrix and occupancy kernels agree with the references") {
  SuiteConfig cfg;
  cfg.agents = 5;
  cfg.states = 3;
  auto inst = make_instance(cfg, 1);
  auto fast = policy_transition_matrix(inst.mdp, inst.policy);
  auto ref = policy_transition_matrix_reference(inst.mdp, inst.policy);
  REQUIRE(fast.size() == ref.size());
  for (std::size_t k = 0; k < fast.size(); ++k) CHECK(fast[k] == doctest::Approx(ref[k]).epsilon(1e-13));
  const std::size_t G = inst.mdp.global_states();
  for (std::size_t g = 0; g < G; ++g) {
    double row = 0.0;
    for (std::size_t h = 0; h < G; ++h) row += fast[g * G + h];
    CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
  }
  auto init = inst.mdp.initial_distribution();
  const auto H = occupancy_horizon(0.9, 1.0);
  auto d1 = discounted_occupancy(fast, init, 0.9, H);
  auto d2 = discounted_occupancy_reference(fast, init, 0.9, H);
  double total = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    CHECK(d1[g] == doctest::Approx(d2[g]).epsilon(1e-12));
    CHECK(d1[g] >= 0.0);
    total += d1[g];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::pow(0.9, static_cast<double>(H)) * 10.0 < 1e-10);
}

TEST_CASE("closed-form bounds") {
  CHECK(theorem1_bound(1.0, 0.9, 0) == doctest::Approx(10.0));
  CHECK(theorem1_bound(2.0, 0.5, 3) == doctest::Approx(0.5));
  // gamma^(k-1)/(1-gamma) * [1 - (1-gamma^2)|N|/n] * r_max * g_max
  CHECK(theorem2_bound(1.0, 0.9, 1, 2, 4, 1.0) == doctest::Approx(10.0 * (1.0 - 0.19 * 0.5)));
  CHECK(theorem2_bound(2.0, 0.5, 2, 3, 4, 0.5) == doctest::Approx(0.5 / 0.5 * (1.0 - 0.75 * 0.75) * 2.0 * 0.5));
}

TEST_CASE("truncation theorems hold on the default suite") {
  auto report = run_suite(default_suite());
  CHECK(report.all_pass());
  std::size_t t1 = 0;
  std::size_t t2 = 0;
  for (const auto& row : report.rows) {
    if (row.theorem == "1") ++t1;
    if (row.theorem == "2") ++t2;
    if (!row.pass) MESSAGE("violation theorem " << row.theorem << " seed " << row.seed << " kappa " << row.kappa);
    CHECK(row.measured <= row.bound);
  }
  CHECK(t1 > 0);
  CHECK(t2 > 0);
  std::ostringstream out;
  write_bound_csv(out, report);
  CHECK(out.str().rfind("theorem,seed,agent,kappa,measured,bound", 0) == 0);
}

TEST_CASE("truncation at the diameter is exact") {
  auto suite = default_suite();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto inst = make_instance(suite, seed);
    auto sol = solve_exact_values(inst.mdp, inst.policy);
    const std::size_t diameter = inst.mdp.graph().diameter();
    auto full = exact_policy_gradient(inst.mdp, inst.policy, sol, GradientMode::full);
    auto trunc = exact_policy_gradient(inst.mdp, inst.policy, sol, GradientMode::truncated, diameter);
    for (std::size_t i = 0; i < full.size(); ++i) {
      for (std::size_t k = 0; k < full[i].size(); ++k) CHECK(std::abs(full[i][k] - trunc[i][k]) <= 1e-9);
    }
    auto index = kappa_neighborhood(inst.mdp.graph(), diameter);
    auto ext = extended_values(inst.mdp, sol, index, Measure::occupancy);
    for (std::size_t i = 0; i < ext.size(); ++i) {
      for (std::size_t g = 0; g < ext[i].size(); ++g) CHECK(ext[i][g] == doctest::Approx(sol.values[i][g]).epsilon(1e-12));
    }
    for (double s : truncation_spread(inst.mdp, sol, index)) CHECK(s == 0.0);
  }
}

TEST_CASE("extended values average within projection classes") {
  auto inst = make_instance(default_suite(), 4);
  auto sol = solve_exact_values(inst.mdp, inst.policy);
  auto index = kappa_neighborhood(inst.mdp.graph(), 1);
  for (Measure m : {Measure::occupancy, Measure::uniform}) {
    auto ext = extended_values(inst.mdp, sol, index, m);
    for (std::size_t i = 0; i < ext.size(); ++i) {
      for (std::size_t g = 0; g < ext[i].size(); ++g) {
        for (std::size_t h = 0; h < ext[i].size(); ++h) {
          if (inst.mdp.neighborhood_code(g, index.members(i)) == inst.mdp.neighborhood_code(h, index.members(i))) {
            CHECK(ext[i][g] == doctest::Approx(ext[i][h]).epsilon(1e-13));
          }
        }
      }
    }
  }
  // Uniform measure: plain class average.
  auto uni = extended_values(inst.mdp, sol, index, Measure::uniform);
  const auto& members = index.members(0);
  double avg = 0.0;
  double count = 0.0;
  for (std::size_t h = 0; h < inst.mdp.global_states(); ++h) {
    if (inst.mdp.neighborhood_code(h, members) == inst.mdp.neighborhood_code(0, members)) {
      avg += sol.values[0][h];
      count += 1.0;
    }
  }
  CHECK(uni[0][0] == doctest::Approx(avg / count).epsilon(1e-13));
  CHECK(parse_measure("uniform") == Measure::uniform);
  CHECK_THROWS(parse_measure("bogus"));
}

TEST_CASE("tabular policy probabilities") {
  auto inst = make_instance(default_suite(), 9);
  const auto& mdp = inst.mdp;
  for (std::size_t g = 0; g < mdp.global_states(); ++g) {
    double total = 0.0;
    for (std::size_t j = 0; j < mdp.joint_actions(); ++j) total += inst.policy.joint_prob(mdp, g, j);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-13));
  }
  CHECK(score_bound(inst.policy) <= std::sqrt(2.0));
}
