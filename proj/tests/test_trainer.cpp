#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "dmpo/trainer/trainer.hpp"

using namespace dmpo;
using namespace dmpo::trainer;

namespace {

RunConfig tiny(const std::string& algo) {
  return parse_config(nlohmann::json::object(),
                      {"env.name=tabular-chain", "algo=" + algo, "train.epochs=3", "train.env_steps_per_epoch=120",
                       "train.branches=2", "train.rollouts_per_branch=6", "train.rollout_length=5",
                       "train.grad_steps=3", "train.minibatch=16", "train.eval_episodes=2", "env.horizon=30",
                       "model.train_steps=20", "model.batch_size=32", "agent.policy_hidden=[8]",
                       "agent.critic_hidden=[8]", "model.hidden=[8]"});
}

std::string metrics_of(const RunConfig& cfg) {
  std::ostringstream out;
  write_metrics_csv(out, run(cfg).reports);
  return out.str();
}

}  // namespace

TEST_CASE("default config values") {
  auto cfg = parse_config(nlohmann::json::object(), {"env.name=cacc-catchup"});
  CHECK(cfg.agent.lr_policy == 3e-4);
  CHECK(cfg.agent.lr_critic == 3e-4);
  CHECK(cfg.model.lr == 3e-4);
  CHECK(cfg.train.rollout_length == 25);
  CHECK(cfg.agent.kappa_critic == 2);
  CHECK(cfg.agent.policy_hidden == std::vector<std::size_t>{64, 64});
  CHECK(cfg.model.hidden == std::vector<std::size_t>{16, 16});
  CHECK(cfg.env.cacc.vehicles == 8);

  auto ring = parse_config(nlohmann::json::object(), {"env.name=ring-attenuation"});
  CHECK(ring.agent.lr_policy == 5e-4);
  CHECK(ring.model.lr == 5e-4);
  CHECK(ring.agent.kappa_critic == 3);
  CHECK(ring.env.ring.vehicles == 22);
}

TEST_CASE("overrides and validation") {
  auto cfg = parse_config(nlohmann::json::object(), {"env.name=cacc-catchup", "gamma=0.95"});
  CHECK(cfg.agent.gamma == 0.95);
  auto dotted = parse_config(nlohmann::json::object(), {"env.name=cacc-catchup", "train.epochs=7"});
  CHECK(dotted.train.epochs == 7);
  nlohmann::json file{{"env", {{"name", "cacc-slowdown"}}}, {"seed", 4}};
  auto from_file = parse_config(file, {"seed=9"});
  CHECK(from_file.seed == 9);
  CHECK(from_file.env.cacc.scenario == envs::CaccScenario::slowdown);

  try {
    parse_config(nlohmann::json::object(), {"env.name=cacc-catchup", "foo=1"});
    FAIL("unknown key accepted");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("foo") != std::string::npos);
    CHECK(msg.find("train.epochs") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(nlohmann::json::object(), {}), ConfigError);
  CHECK_THROWS_AS(parse_config(nlohmann::json::object(), {"env.name=cacc-catchup", "train.minibatch=0"}), ConfigError);
  CHECK_THROWS_AS(parse_config(nlohmann::json::object(), {"env.name=cacc-catchup", "algo=ppo"}), ConfigError);
  CHECK_THROWS_AS(parse_config(nlohmann::json::object(), {"env.name=cacc-catchup", "gamma=abc"}), ConfigError);
}

TEST_CASE("printed config parses back to the same config") {
  for (const char* env : {"cacc-catchup", "cacc-slowdown", "ring-attenuation", "tabular-chain"}) {
    auto cfg = parse_config(nlohmann::json::object(), {std::string("env.name=") + env, "seed=17", "algo=cppo"});
    auto text = to_json(cfg).dump(2);
    auto back = parse_config(nlohmann::json::parse(text), {});
    CHECK(back == cfg);
    CHECK(from_json(to_json(cfg)) == cfg);
  }
}

TEST_CASE("centralized critic covers the whole platoon") {
  auto cfg = parse_config(nlohmann::json::object(), {"env.name=cacc-catchup", "algo=cppo"});
  auto env = make_env(cfg.env);
  auto eff = effective_agent_config(cfg, env->graph());
  CHECK(eff.kappa_critic == 7);
  CHECK(eff.kappa_policy == cfg.agent.kappa_policy);
  Rng rng(0);
  auto team = make_team(cfg, *env, rng);
  for (std::size_t i = 0; i < 8; ++i) CHECK((*team)[i].critic().input_dim() == 8 * 3);
}

TEST_CASE("runs are byte-for-byte reproducible") {
  for (const char* algo : {"dmpo", "dppo", "cppo"}) {
    auto cfg = tiny(algo);
    auto a = metrics_of(cfg);
    CHECK(a == metrics_of(cfg));
    cfg.seed = 1;
    CHECK(a != metrics_of(cfg));
  }
}

TEST_CASE("env step accounting ignores model work") {
  auto cfg = tiny("dmpo");
  auto base = run(cfg).reports;
  cfg.train.branches = 4;
  cfg.train.rollouts_per_branch = 3;
  cfg.train.rollout_length = 9;
  cfg.train.grad_steps = 1;
  auto other = run(cfg).reports;
  REQUIRE(base.size() == 4);
  REQUIRE(other.size() == 4);
  for (std::size_t e = 0; e < base.size(); ++e) {
    CHECK(base[e].env_steps == 120 * e);
    CHECK(other[e].env_steps == base[e].env_steps);
  }
  for (std::size_t e = 1; e < base.size(); ++e) {
    CHECK(base[e].model_transitions == 2 * 6 * 5);
    CHECK(other[e].model_transitions == 4 * 3 * 9);
  }
}

TEST_CASE("zero branches falls back to the decentralized baseline schedule") {
  auto dmpo = tiny("dmpo");
  dmpo.train.branches = 0;
  auto dppo = tiny("dppo");
  dppo.train.branches = 0;
  auto a = run(dmpo).reports;
  auto b = run(dppo).reports;
  for (std::size_t e = 1; e < a.size(); ++e) {
    CHECK(a[e].updates == b[e].updates);
    CHECK(a[e].updates == dmpo.train.grad_steps);
    CHECK(a[e].model_transitions == 0);
  }
  CHECK_THROWS_AS(run_dppo(dmpo), ConfigError);
}

TEST_CASE("checkpoint round trip") {
  auto cfg = tiny("dmpo");
  auto result = run(cfg);
  auto dir = std::filesystem::temp_directory_path() / "dmpo_test_checkpoint";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir, cfg, *result.team, 3);
  RunConfig loaded_cfg;
  auto loaded = load_checkpoint(dir, loaded_cfg);
  CHECK(loaded_cfg == cfg);
  for (std::size_t i = 0; i < result.team->size(); ++i) {
    auto p = (*result.team)[i].policy().params();
    auto q = (*loaded)[i].policy().params();
    CHECK(std::equal(p.begin(), p.end(), q.begin(), q.end()));
    auto c = (*result.team)[i].critic().params();
    auto d = (*loaded)[i].critic().params();
    CHECK(std::equal(c.begin(), c.end(), d.begin(), d.end()));
  }
  auto env = make_env(cfg.env);
  Rng r1(5);
  Rng r2(5);
  auto e1 = evaluate(*result.team, *env, 3, r1);
  auto e2 = evaluate(*loaded, *env, 3, r2);
  CHECK(e1.episode_rewards == e2.episode_rewards);
  std::filesystem::remove_all(dir);
  CHECK_THROWS(load_checkpoint(dir, loaded_cfg));
}

TEST_CASE("evaluation keeps traces") {
  auto cfg = parse_config(nlohmann::json::object(), {"env.name=cacc-catchup", "env.horizon=40"});
  auto env = make_env(cfg.env);
  Rng rng(1);
  auto team = make_team(cfg, *env, rng);
  auto report = evaluate(*team, *env, 2, rng, true);
  REQUIRE(report.traces.size() == 2);
  CHECK(report.traces[0].size() <= 40);
  CHECK(report.traces[0].back().d);
  double sum = 0.0;
  for (const auto& t : report.traces[0]) sum += t.global_reward();
  CHECK(sum == doctest::Approx(report.episode_rewards[0]));
}

TEST_CASE("summary csv has mean and std per epoch") {
  auto cfg = tiny("dppo");
  std::vector<std::vector<EpochReport>> runs;
  for (std::uint64_t s = 0; s < 3; ++s) {
    cfg.seed = s;
    runs.push_back(run(cfg).reports);
  }
  std::ostringstream out;
  write_summary_csv(out, runs);
  std::istringstream in(out.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 1 + runs[0].size());
}
