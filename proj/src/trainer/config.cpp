#include "dmpo/trainer/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dmpo/envs/tabular.hpp"

namespace dmpo::trainer {

using nlohmann::json;

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::dmpo: return "dmpo";
    case Algorithm::dppo: return "dppo";
    case Algorithm::cppo: return "cppo";
  }
  return "dmpo";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "dmpo") return Algorithm::dmpo;
  if (name == "dppo") return Algorithm::dppo;
  if (name == "cppo") return Algorithm::cppo;
  throw ConfigError("unknown algorithm '" + name + "' (expected dmpo, dppo or cppo)");
}

namespace {

enum class EnvKind { cacc, ring, tabular };

EnvKind env_kind(const std::string& name) {
  if (name == "cacc-catchup" || name == "cacc-slowdown") return EnvKind::cacc;
  if (name == "ring-attenuation") return EnvKind::ring;
  if (name == "tabular-chain") return EnvKind::tabular;
  throw ConfigError("unknown env '" + name +
                    "' (expected cacc-catchup, cacc-slowdown, ring-attenuation or tabular-chain)");
}

// Single list of (path, field) pairs shared by serialisation and parsing.
template <typename Config, typename F>
void visit_fields(Config& c, F&& f) {
  f("env.name", c.env.name);
  switch (env_kind(c.env.name)) {
    case EnvKind::cacc:
      f("env.vehicles", c.env.cacc.vehicles);
      f("env.horizon", c.env.cacc.horizon);
      f("env.decision_interval", c.env.cacc.decision_interval);
      f("env.headway_stop", c.env.cacc.ovm.headway_stop);
      f("env.headway_go", c.env.cacc.ovm.headway_go);
      f("env.v_max", c.env.cacc.ovm.v_max);
      f("env.dt", c.env.cacc.ovm.dt);
      f("env.target_headway", c.env.cacc.ovm.target_headway);
      f("env.target_velocity", c.env.cacc.ovm.target_velocity);
      f("env.w_velocity", c.env.cacc.w_velocity);
      f("env.w_control", c.env.cacc.w_control);
      f("env.collision_headway", c.env.cacc.collision_headway);
      f("env.collision_penalty", c.env.cacc.collision_penalty);
      break;
    case EnvKind::ring:
      f("env.vehicles", c.env.ring.vehicles);
      f("env.length", c.env.ring.length);
      f("env.dt", c.env.ring.dt);
      f("env.horizon", c.env.ring.horizon);
      f("env.target_velocity", c.env.ring.target_velocity);
      f("env.max_accel", c.env.ring.max_accel);
      f("env.w_control", c.env.ring.w_control);
      f("env.min_gap", c.env.ring.min_gap);
      f("env.collision_penalty", c.env.ring.collision_penalty);
      break;
    case EnvKind::tabular:
      f("env.agents", c.env.tabular.agents);
      f("env.states", c.env.tabular.states);
      f("env.actions", c.env.tabular.actions);
      f("env.r_max", c.env.tabular.r_max);
      f("env.mdp_seed", c.env.tabular.mdp_seed);
      f("env.horizon", c.env.tabular.horizon);
      break;
  }
  f("algo", c.algo);
  f("seed", c.seed);
  f("train.epochs", c.train.epochs);
  f("train.env_steps_per_epoch", c.train.env_steps_per_epoch);
  f("train.branches", c.train.branches);
  f("train.rollouts_per_branch", c.train.rollouts_per_branch);
  f("train.rollout_length", c.train.rollout_length);
  f("train.grad_steps", c.train.grad_steps);
  f("train.minibatch", c.train.minibatch);
  f("train.eval_episodes", c.train.eval_episodes);
  f("train.env_buffer", c.train.env_buffer);
  f("train.model_buffer", c.train.model_buffer);
  f("train.checkpoint_every", c.train.checkpoint_every);
  f("agent.policy_hidden", c.agent.policy_hidden);
  f("agent.critic_hidden", c.agent.critic_hidden);
  f("agent.kappa_policy", c.agent.kappa_policy);
  f("agent.kappa_critic", c.agent.kappa_critic);
  f("agent.lr_policy", c.agent.lr_policy);
  f("agent.lr_critic", c.agent.lr_critic);
  f("agent.gamma", c.agent.gamma);
  f("agent.clip_eps", c.agent.clip_eps);
  f("agent.entropy_beta", c.agent.entropy_beta);
  f("agent.grad_clip", c.agent.grad_clip);
  f("agent.normalize_advantages", c.agent.normalize_advantages);
  f("agent.bootstrap", c.agent.bootstrap);
  f("agent.initial_log_std", c.agent.initial_log_std);
  f("agent.reward_scale", c.agent.reward_scale);
  f("agent.neighborhood_reward", c.agent.neighborhood_reward);
  f("model.hidden", c.model.hidden);
  f("model.kappa", c.model.kappa);
  f("model.lr", c.model.lr);
  f("model.alpha", c.model.alpha);
  f("model.residual", c.model.residual);
  f("model.train_steps", c.model.train_steps);
  f("model.batch_size", c.model.batch_size);
  f("model.holdout_every", c.model.holdout_every);
  f("verify.instances", c.verify.instances);
  f("verify.agents", c.verify.agents);
  f("verify.states", c.verify.states);
  f("verify.actions", c.verify.actions);
  f("verify.discount", c.verify.gamma);
  f("verify.r_max", c.verify.r_max);
  f("verify.kappas_value", c.verify.kappas_value);
  f("verify.kappas_gradient", c.verify.kappas_gradient);
  f("verify.logit_scale", c.verify.logit_scale);
  f("verify.measure", c.verify.measure);
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  return parts;
}

json& at_path(json& tree, const std::string& path) {
  json* node = &tree;
  for (const auto& p : split_path(path)) node = &(*node)[p];
  return *node;
}

const json* find_path(const json& tree, const std::string& path) {
  const json* node = &tree;
  for (const auto& p : split_path(path)) {
    if (!node->is_object() || !node->contains(p)) return nullptr;
    node = &(*node)[p];
  }
  return node;
}

// Leaf paths of a tree; arrays count as leaves.
void leaf_paths(const json& tree, const std::string& prefix, std::vector<std::string>& out) {
  for (auto it = tree.begin(); it != tree.end(); ++it) {
    std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      leaf_paths(*it, path, out);
    } else {
      out.push_back(path);
    }
  }
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

[[noreturn]] void unknown_key(const std::string& key, const json& defaults) {
  std::vector<std::string> valid;
  leaf_paths(defaults, "", valid);
  throw ConfigError("unknown config key '" + key + "'; valid keys: " + join(valid));
}

void merge_into(json& target, const json& patch, const std::string& prefix, const json& defaults) {
  if (!patch.is_object()) throw ConfigError("config root must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!target.contains(it.key())) unknown_key(path, defaults);
    json& slot = target[it.key()];
    if (slot.is_object()) {
      if (!it->is_object()) throw ConfigError("config key '" + path + "' must be an object");
      merge_into(slot, *it, path, defaults);
    } else {
      slot = *it;
    }
  }
}

std::string resolve_key(const std::string& key, const json& tree) {
  std::vector<std::string> leaves;
  leaf_paths(tree, "", leaves);
  if (std::find(leaves.begin(), leaves.end(), key) != leaves.end()) return key;
  std::vector<std::string> matches;
  for (const auto& l : leaves) {
    auto pos = l.rfind('.');
    std::string leaf = pos == std::string::npos ? l : l.substr(pos + 1);
    if (leaf == key) matches.push_back(l);
  }
  if (matches.size() == 1) return matches.front();
  if (matches.size() > 1) throw ConfigError("ambiguous config key '" + key + "' (matches " + join(matches) + ")");
  unknown_key(key, tree);
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text);
  }
}

struct Writer {
  json& tree;
  void operator()(const char* path, const std::string& v) const { at_path(tree, path) = v; }
  void operator()(const char* path, std::size_t v) const { at_path(tree, path) = v; }
  void operator()(const char* path, double v) const { at_path(tree, path) = v; }
  void operator()(const char* path, bool v) const { at_path(tree, path) = v; }
  void operator()(const char* path, const std::vector<std::size_t>& v) const { at_path(tree, path) = v; }
  void operator()(const char* path, Algorithm v) const { at_path(tree, path) = algorithm_name(v); }
  void operator()(const char* path, agent::Bootstrap v) const {
    at_path(tree, path) = v == agent::Bootstrap::literal ? "literal" : "discounted";
  }
};

struct Reader {
  const json& tree;

  const json& get(const char* path) const {
    const json* node = find_path(tree, path);
    if (node == nullptr) throw ConfigError(std::string("missing config key '") + path + "'");
    return *node;
  }
  [[noreturn]] static void invalid(const char* path, const json& v, const char* expected) {
    throw ConfigError(std::string("invalid value for '") + path + "': " + v.dump() + " (expected " + expected + ")");
  }
  void operator()(const char* path, std::string& out) const {
    const json& v = get(path);
    if (!v.is_string()) invalid(path, v, "a string");
    out = v.get<std::string>();
  }
  void operator()(const char* path, std::size_t& out) const {
    const json& v = get(path);
    if (!v.is_number_unsigned()) invalid(path, v, "a non-negative integer");
    out = v.get<std::size_t>();
  }
  void operator()(const char* path, double& out) const {
    const json& v = get(path);
    if (!v.is_number() || !std::isfinite(v.get<double>())) invalid(path, v, "a finite number");
    out = v.get<double>();
  }
  void operator()(const char* path, bool& out) const {
    const json& v = get(path);
    if (!v.is_boolean()) invalid(path, v, "true or false");
    out = v.get<bool>();
  }
  void operator()(const char* path, std::vector<std::size_t>& out) const {
    const json& v = get(path);
    if (!v.is_array()) invalid(path, v, "a list of non-negative integers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number_unsigned()) invalid(path, v, "a list of non-negative integers");
      out.push_back(e.get<std::size_t>());
    }
  }
  void operator()(const char* path, Algorithm& out) const {
    const json& v = get(path);
    if (!v.is_string()) invalid(path, v, "dmpo, dppo or cppo");
    out = parse_algorithm(v.get<std::string>());
  }
  void operator()(const char* path, agent::Bootstrap& out) const {
    const json& v = get(path);
    if (v == "discounted") {
      out = agent::Bootstrap::discounted;
    } else if (v == "literal") {
      out = agent::Bootstrap::literal;
    } else {
      invalid(path, v, "discounted or literal");
    }
  }
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void RunConfig::validate() const {
  auto kind = env_kind(env.name);
  if (kind == EnvKind::cacc) {
    require(env.cacc.vehicles >= 1, "env.vehicles must be positive");
    require(env.cacc.horizon >= 1, "env.horizon must be positive");
    require(env.cacc.decision_interval >= 1, "env.decision_interval must be positive");
    try {
      env.cacc.ovm.validate();
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    require(env.cacc.ovm.target_headway > env.cacc.collision_headway,
            "env.target_headway must exceed env.collision_headway");
  } else if (kind == EnvKind::ring) {
    require(env.ring.vehicles >= 1, "env.vehicles must be positive");
    require(env.ring.horizon >= 1, "env.horizon must be positive");
    require(env.ring.length > env.ring.min_gap * static_cast<double>(env.ring.vehicles),
            "env.length must leave room for every vehicle");
    require(env.ring.dt > 0.0 && env.ring.max_accel > 0.0, "env.dt and env.max_accel must be positive");
  } else {
    require(env.tabular.agents >= 1 && env.tabular.states >= 1 && env.tabular.actions >= 1,
            "tabular env counts must be positive");
    require(env.tabular.horizon >= 1, "env.horizon must be positive");
  }
  require(train.epochs >= 1, "train.epochs must be positive");
  require(train.env_steps_per_epoch >= 1, "train.env_steps_per_epoch must be positive");
  require(train.rollouts_per_branch >= 1, "train.rollouts_per_branch must be positive");
  require(train.rollout_length >= 1, "train.rollout_length must be positive");
  require(train.grad_steps >= 1, "train.grad_steps must be positive");
  require(train.minibatch >= 1, "train.minibatch must be positive");
  require(train.eval_episodes >= 1, "train.eval_episodes must be positive");
  require(train.env_buffer >= 1 && train.model_buffer >= 1, "buffer capacities must be positive");
  for (auto w : agent.policy_hidden) require(w >= 1, "agent.policy_hidden widths must be positive");
  for (auto w : agent.critic_hidden) require(w >= 1, "agent.critic_hidden widths must be positive");
  for (auto w : model.hidden) require(w >= 1, "model.hidden widths must be positive");
  require(agent.lr_policy > 0.0 && agent.lr_critic > 0.0 && model.lr > 0.0, "learning rates must be positive");
  require(agent.gamma > 0.0 && agent.gamma < 1.0, "agent.gamma must lie in (0, 1)");
  require(agent.clip_eps > 0.0, "agent.clip_eps must be positive");
  require(agent.entropy_beta >= 0.0, "agent.entropy_beta must be non-negative");
  require(agent.grad_clip > 0.0, "agent.grad_clip must be positive");
  require(agent.reward_scale > 0.0, "agent.reward_scale must be positive");
  require(model.alpha >= 0.0, "model.alpha must be non-negative");
  require(model.train_steps >= 1 && model.batch_size >= 1, "model.train_steps and model.batch_size must be positive");
  require(verify.instances >= 1 && verify.agents >= 1 && verify.states >= 1 && verify.actions >= 1,
          "verify counts must be positive");
  require(verify.gamma > 0.0 && verify.gamma < 1.0, "verify.discount must lie in (0, 1)");
  require(verify.r_max > 0.0, "verify.r_max must be positive");
  require(verify.measure == "occupancy" || verify.measure == "uniform", "verify.measure must be occupancy or uniform");
}

bool RunConfig::operator==(const RunConfig& other) const { return to_json(*this) == to_json(other); }

json default_config_json(const std::string& env_name) {
  RunConfig c;
  c.env.name = env_name;
  switch (env_kind(env_name)) {
    case EnvKind::cacc:
      c.env.cacc.scenario = envs::parse_cacc_scenario(env_name);
      c.agent.lr_policy = c.agent.lr_critic = c.model.lr = 3e-4;
      c.agent.kappa_critic = 2;
      break;
    case EnvKind::ring:
      c.agent.lr_policy = c.agent.lr_critic = c.model.lr = 5e-4;
      c.agent.kappa_critic = 3;
      break;
    case EnvKind::tabular:
      c.agent.kappa_critic = 1;
      break;
  }
  return to_json(c);
}

json to_json(const RunConfig& config) {
  json tree = json::object();
  visit_fields(config, Writer{tree});
  return tree;
}

RunConfig from_json(const json& tree) {
  RunConfig c;
  const json* name = find_path(tree, "env.name");
  if (name == nullptr || !name->is_string()) throw ConfigError("missing env: set env.name");
  c.env.name = name->get<std::string>();
  visit_fields(c, Reader{tree});
  if (env_kind(c.env.name) == EnvKind::cacc) c.env.cacc.scenario = envs::parse_cacc_scenario(c.env.name);
  c.validate();
  return c;
}

RunConfig parse_config(const json& file_tree, const std::vector<std::string>& overrides) {
  if (!file_tree.is_null() && !file_tree.is_object()) throw ConfigError("config root must be an object");
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& o : overrides) {
    auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not of the form key=value");
    pairs.emplace_back(o.substr(0, eq), o.substr(eq + 1));
  }

  std::string env_name;
  if (const json* n = file_tree.is_object() ? find_path(file_tree, "env.name") : nullptr; n && n->is_string()) {
    env_name = n->get<std::string>();
  }
  for (const auto& [k, v] : pairs) {
    if (k == "env.name" || k == "name") env_name = v;
  }
  if (env_name.empty()) throw ConfigError("missing env: set env.name in the config file or with --set env.name=...");

  json defaults = default_config_json(env_name);
  json tree = defaults;
  if (file_tree.is_object()) merge_into(tree, file_tree, "", defaults);
  for (const auto& [k, v] : pairs) {
    std::string path = resolve_key(k, tree);
    at_path(tree, path) = path == "env.name" ? json(v) : parse_value(v);
  }
  // Keep env-specific defaults consistent when the env was switched by an override.
  at_path(tree, "env.name") = env_name;
  return from_json(tree);
}

RunConfig parse_config_file(const std::string& path, const std::vector<std::string>& overrides) {
  json tree = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    try {
      tree = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("malformed config file '" + path + "': " + e.what());
    }
  }
  return parse_config(tree, overrides);
}

std::unique_ptr<Env> make_env(const EnvConfig& config) {
  switch (env_kind(config.name)) {
    case EnvKind::cacc: {
      auto c = config.cacc;
      c.scenario = envs::parse_cacc_scenario(config.name);
      return std::make_unique<envs::CaccEnv>(c);
    }
    case EnvKind::ring:
      return std::make_unique<envs::RingEnv>(config.ring);
    case EnvKind::tabular: {
      const auto& t = config.tabular;
      Rng rng(t.mdp_seed);
      return std::make_unique<envs::TabularEnv>(
          envs::tabular_random(t.agents, t.states, t.actions, 0.9, t.r_max, rng), t.horizon);
    }
  }
  throw ConfigError("unknown env");
}

agent::AgentConfig effective_agent_config(const RunConfig& config, const AgentGraph& graph) {
  agent::AgentConfig a = config.agent;
  if (config.algo == Algorithm::cppo) a.kappa_critic = graph.diameter();
  return a;
}

}  // namespace dmpo::trainer
