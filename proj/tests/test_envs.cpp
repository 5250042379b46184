#include <array>
#include <cmath>

#include "doctest.h"
#include "dmpo/envs/cacc.hpp"
#include "dmpo/envs/ring.hpp"
#include "dmpo/envs/tabular.hpp"

using namespace dmpo;
using namespace dmpo::envs;

namespace {

CaccState uniform_platoon(std::size_t n, double h, double v) {
  CaccState s;
  s.headway.assign(n, h);
  s.velocity.assign(n, v);
  s.accel.assign(n, 0.0);
  s.lead_velocity = v;
  return s;
}

JointAction constant_action(std::size_t n, double a) { return JointAction(n, AgentAction{a}); }

}  // namespace

TEST_CASE("cacc kinematics examples") {
  CaccConfig cfg;
  std::vector<GainPair> idle(1, GainPair{0.0, 0.0});

  auto same = uniform_platoon(1, 27.0, 13.0);
  CHECK(cacc_advance(same, idle, 13.0, cfg).next.headway[0] == 27.0);

  auto closing = uniform_platoon(1, 20.0, 15.0);
  closing.lead_velocity = 16.0;
  auto r = cacc_advance(closing, idle, 16.0, cfg);
  CHECK(r.next.headway[0] == doctest::Approx(20.1).epsilon(1e-14));
  CHECK(r.next.velocity[0] == 15.0);

  CHECK(cacc_reward(20.0, 15.0, 0.0, cfg) == 0.0);
  CHECK(cacc_reward(10.0, 15.0, 0.0, cfg) == doctest::Approx(-0.25));
  CHECK(cacc_reward(0.5, 15.0, 0.0, cfg) < -cfg.collision_penalty);
}

TEST_CASE("optimal velocity curve") {
  OvmParams p;
  CHECK(p.desired_velocity(p.headway_stop) == 0.0);
  CHECK(p.desired_velocity(0.0) == 0.0);
  CHECK(p.desired_velocity(p.headway_go) == doctest::Approx(p.v_max));
  CHECK(p.desired_velocity(100.0) == doctest::Approx(p.v_max));
  CHECK(p.desired_velocity(20.0) == doctest::Approx(15.0));
}

TEST_CASE("cacc zero control keeps headways constant") {
  CaccConfig cfg;
  std::vector<GainPair> idle(8, GainPair{0.0, 0.0});
  auto s = uniform_platoon(8, 22.0, 14.0);
  for (int t = 0; t < 500; ++t) s = cacc_advance(s, idle, 14.0, cfg).next;
  for (double h : s.headway) CHECK(h == 22.0);
  for (double v : s.velocity) CHECK(v == 14.0);
}

TEST_CASE("cacc reset golden values") {
  CaccConfig cfg;
  CaccEnv env(cfg);
  Rng rng(0);
  env.reset(rng);
  const auto& p = env.physical_state();
  const std::array<std::array<double, 2>, 8> golden{{{19.659793363370461, 15.196858083851932},
                                                     {29.539569025844866, 12.038997865077869},
                                                     {30.042284969992604, 11.82286391658613},
                                                     {30.131528374509951, 11.969428211941525},
                                                     {30.342260515185785, 12.16252055681757},
                                                     {29.923148165461544, 12.062210339823782},
                                                     {30.43043109893668, 11.937754223317574},
                                                     {29.754615055123178, 11.977868362594267}}};
  CHECK(p.lead_velocity == 15.0);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(p.headway[i] == doctest::Approx(golden[i][0]).epsilon(1e-14));
    CHECK(p.velocity[i] == doctest::Approx(golden[i][1]).epsilon(1e-14));
  }
  for (std::size_t i = 1; i < 8; ++i) CHECK(p.velocity[0] > p.velocity[i]);

  CaccConfig slow;
  slow.scenario = CaccScenario::slowdown;
  CaccEnv senv(slow);
  Rng srng(0);
  senv.reset(srng);
  for (double v : senv.physical_state().velocity) {
    CHECK(v == 20.0);
    CHECK(v > slow.ovm.target_velocity);
  }
  CHECK(senv.lead_velocity(100) < senv.lead_velocity(0));
}

TEST_CASE("cacc replay is deterministic") {
  CaccConfig cfg;
  CaccEnv a(cfg);
  CaccEnv b(cfg);
  Rng ra(5);
  Rng rb(5);
  CHECK(a.reset(ra) == b.reset(rb));
  Rng pick(9);
  for (std::size_t t = 0; t < 200; ++t) {
    JointAction act;
    for (std::size_t i = 0; i < 8; ++i) act.push_back({static_cast<double>(pick.index(4))});
    auto ta = a.step(act);
    auto tb = b.step(act);
    CHECK(ta.s_next == tb.s_next);
    CHECK(ta.r == tb.r);
    if (ta.d) break;
  }
}

TEST_CASE("cacc episode structure") {
  CaccConfig cfg;
  CaccEnv env(cfg);
  CHECK(env.graph().size() == 8);
  CHECK(env.horizon() == 600);
  Rng rng(1);
  env.reset(rng);
  std::size_t steps = 0;
  bool done = false;
  while (!done) {
    done = env.step(constant_action(8, 3.0)).d;
    ++steps;
  }
  CHECK(steps == 600);
  const auto& p = env.physical_state();
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(std::abs(p.headway[i] - 20.0) < 2.0);
    CHECK(std::abs(p.velocity[i] - 15.0) < 1.0);
  }

  CHECK_THROWS(env.step(constant_action(7, 0.0)));
  CHECK_THROWS(env.step(constant_action(8, 4.0)));

  CaccConfig coarse;
  coarse.decision_interval = 7;
  CaccEnv cenv(coarse);
  CHECK(cenv.horizon() == 86);
  CaccConfig bad;
  bad.decision_interval = 0;
  CHECK_THROWS(CaccEnv{bad});
}

TEST_CASE("cacc held gains sum rewards over the interval") {
  CaccConfig fine;
  CaccConfig coarse;
  coarse.decision_interval = 4;
  CaccEnv a(fine);
  CaccEnv b(coarse);
  Rng ra(2);
  Rng rb(2);
  a.reset(ra);
  b.reset(rb);
  auto act = constant_action(8, 3.0);
  std::vector<double> sum(8, 0.0);
  for (int k = 0; k < 4; ++k) {
    auto t = a.step(act);
    for (std::size_t i = 0; i < 8; ++i) sum[i] += t.r[i];
  }
  auto t = b.step(act);
  for (std::size_t i = 0; i < 8; ++i) CHECK(t.r[i] == doctest::Approx(sum[i]).epsilon(1e-13));
  CHECK(t.s_next == a.state());
}

TEST_CASE("cacc collision ends the episode") {
  CaccConfig cfg;
  CaccEnv env(cfg);
  Rng rng(0);
  env.reset(rng);
  bool done = false;
  Transition last;
  for (std::size_t t = 0; t < 600 && !done; ++t) {
    last = env.step(constant_action(8, 1.0));
    done = last.d;
  }
  CHECK(env.physical_state().t < 600);
  CHECK(env.is_failure(last.s_next));
  double worst = 0.0;
  for (double r : last.r) worst = std::min(worst, r);
  CHECK(worst < -cfg.collision_penalty);
}

TEST_CASE("ring examples") {
  RingConfig cfg;
  RingEnv env(cfg);
  Rng rng(0);
  env.reset(rng);
  const auto& p = env.physical_state();
  double total_gap = 0.0;
  for (std::size_t i = 0; i < 22; ++i) total_gap += ring_gap(p, i);
  CHECK(total_gap / 22.0 == doctest::Approx(230.0 / 22.0));

  RingEnv other(cfg);
  Rng rng2(0);
  other.reset(rng2);
  CHECK(other.physical_state().position == p.position);

  RingConfig empty;
  empty.vehicles = 0;
  CHECK_THROWS(RingEnv{empty});

  RingState even;
  even.length = 230.0;
  for (std::size_t i = 0; i < 22; ++i) {
    even.position.push_back(static_cast<double>(i) * 230.0 / 22.0);
    even.velocity.push_back(cfg.target_velocity);
  }
  auto cruise = ring_advance(even, std::vector<double>(22, 0.0), cfg);
  for (double r : cruise.reward) CHECK(r == doctest::Approx(0.0).scale(1.0));
  CHECK(!cruise.collision);

  RingState brake = even;
  brake.velocity[5] = 1.0;
  std::vector<double> accel(22, 0.0);
  accel[5] = -cfg.max_accel;
  auto braked = ring_advance(brake, accel, cfg);
  double before = ring_gap(brake, 4);
  double after = ring_gap(braked.next, 4);
  CHECK(after - before == doctest::Approx(-(cfg.target_velocity - 1.0) * cfg.dt).epsilon(1e-12));
  CHECK(braked.control[5] == -cfg.max_accel);

  RingState tight = even;
  tight.position[1] = tight.position[0] + cfg.min_gap + 0.1;
  tight.velocity[0] = 5.0;
  tight.velocity[1] = 0.0;
  auto crash = ring_advance(tight, std::vector<double>(22, 0.0), cfg);
  CHECK(crash.collision);
  CHECK(crash.reward[0] < -cfg.collision_penalty + 1.0);
}

TEST_CASE("tabular counting and normalization") {
  Rng rng(0);
  auto mdp = tabular_random(4, 2, 2, 0.9, 1.0, rng);
  CHECK(mdp.global_states() == 16);
  CHECK(mdp.joint_actions() == 16);
  CHECK(mdp.max_row_error() < 1e-12);
  CHECK(mdp.r_max() <= 1.0);

  Rng again(0);
  auto twin = tabular_random(4, 2, 2, 0.9, 1.0, again);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t code = 0; code < mdp.neighborhood_configs(i); ++code) {
      for (std::size_t a = 0; a < 2; ++a) {
        for (std::size_t s = 0; s < 2; ++s) CHECK(mdp.local_prob(i, code, a, s) == twin.local_prob(i, code, a, s));
      }
    }
    for (std::size_t s = 0; s < 2; ++s) CHECK(mdp.reward(i, s, 1) == twin.reward(i, s, 1));
  }

  Rng big(1);
  CHECK_THROWS_AS(tabular_random(13, 2, 2, 0.9, 1.0, big), std::invalid_argument);
}

TEST_CASE("tabular global transition is the product of locals") {
  Rng rng(3);
  auto mdp = tabular_random(3, 3, 2, 0.9, 1.0, rng);
  for (std::size_t g = 0; g < mdp.global_states(); ++g) {
    for (std::size_t j = 0; j < mdp.joint_actions(); ++j) {
      double row = 0.0;
      for (std::size_t h = 0; h < mdp.global_states(); ++h) {
        double expect = 1.0;
        for (std::size_t i = 0; i < 3; ++i) {
          const auto& members = mdp.neighbors().members(i);
          expect *= mdp.local_prob(i, mdp.neighborhood_code(g, members), mdp.local_action_of(j, i), mdp.local_of(h, i));
        }
        CHECK(mdp.global_prob(g, j, h) == doctest::Approx(expect).epsilon(1e-15));
        row += mdp.global_prob(g, j, h);
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("tabular sampling frequencies follow the product kernel") {
  Rng rng(4);
  auto mdp = tabular_random(2, 2, 2, 0.9, 1.0, rng);
  const std::vector<std::size_t> actions{1, 0};
  const std::size_t g = 2;
  std::size_t joint = 0;
  for (std::size_t i = 0; i < 2; ++i) {
    std::size_t stride = 1;
    for (std::size_t k = 0; k < i; ++k) stride *= 2;
    joint += actions[i] * stride;
  }
  REQUIRE(mdp.local_action_of(joint, 0) == 1);
  std::vector<double> counts(4, 0.0);
  const int draws = 200000;
  Rng sampler(8);
  for (int k = 0; k < draws; ++k) counts[mdp.sample_next(g, actions, sampler)] += 1.0;
  for (std::size_t h = 0; h < 4; ++h) {
    double p = mdp.global_prob(g, joint, h);
    double sigma = std::sqrt(p * (1 - p) / draws);
    CHECK(std::abs(counts[h] / draws - p) <= 4.0 * sigma + 1e-12);
  }
}

TEST_CASE("tabular env bookkeeping") {
  Rng rng(6);
  TabularEnv env(tabular_random(3, 2, 2, 0.9, 1.0, rng), 5);
  CHECK(env.horizon() == 5);
  Rng r(1);
  auto s = env.reset(r);
  CHECK(env.to_index(s) == env.global_index());
  CHECK(env.to_state(env.global_index()) == s);
  for (std::size_t t = 0; t < 5; ++t) {
    auto tr = env.step(constant_action(3, 1.0));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(tr.r[i] == env.mdp().reward(i, static_cast<std::size_t>(tr.s[i][0]), 1));
    }
    CHECK(tr.d == (t == 4));
  }
}
