#include "dmpo/agent/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dmpo/parallel.hpp"

namespace dmpo::agent {

AgentNets::AgentNets(std::size_t index, std::vector<std::size_t> policy_members,
                     std::vector<std::size_t> critic_members, std::size_t state_dim, const StateScaling& scaling,
                     const ActionSpace& actions, const AgentConfig& config, Rng& rng)
    : index_(index),
      policy_members_(std::move(policy_members)),
      critic_members_(std::move(critic_members)),
      state_dim_(state_dim),
      scaling_(scaling),
      policy_(nn::MlpSpec{policy_members_.size() * state_dim, config.policy_hidden,
                          nn::PolicyHead::for_action_space(actions).net_output_dim()}),
      head_(nn::PolicyHead::for_action_space(actions, config.initial_log_std)),
      critic_(nn::MlpSpec{critic_members_.size() * state_dim, config.critic_hidden, 1}),
      policy_opt_(policy_.param_count() + head_.log_std().size(), config.lr_policy),
      critic_opt_(critic_.param_count(), config.lr_critic) {
  if (scaling_.offset.empty()) scaling_.offset.assign(state_dim, 0.0);
  if (scaling_.scale.empty()) scaling_.scale.assign(state_dim, 1.0);
  if (scaling_.offset.size() != state_dim || scaling_.scale.size() != state_dim) {
    throw std::invalid_argument("state scaling does not match the local state dimension");
  }
  policy_.init(rng, 1.0, config.policy_output_gain);
  critic_.init(rng, 1.0, 1.0);
}

void AgentNets::project(const GlobalState& s, const std::vector<std::size_t>& members, std::span<double> out) const {
  if (out.size() != members.size() * state_dim_) throw nn::ShapeError("projection buffer has wrong size");
  std::size_t k = 0;
  for (std::size_t j : members) {
    const LocalState& x = s.at(j);
    if (x.size() != state_dim_) throw nn::ShapeError("local state has wrong dimension");
    for (std::size_t d = 0; d < state_dim_; ++d) out[k++] = (x[d] - scaling_.offset[d]) / scaling_.scale[d];
  }
}

void AgentNets::policy_input(const GlobalState& s, std::span<double> out) const { project(s, policy_members_, out); }

void AgentNets::critic_input(const GlobalState& s, std::span<double> out) const { project(s, critic_members_, out); }

double AgentNets::extended_value(const GlobalState& s) const {
  std::vector<double> x(critic_.input_dim());
  critic_input(s, x);
  return critic_.forward(x)[0];
}

nn::PolicyHead::Sample AgentNets::act(const GlobalState& s, Rng& rng) const {
  std::vector<double> x(policy_.input_dim());
  policy_input(s, x);
  auto y = policy_.forward(x);
  return head_.sample(y, rng);
}

AgentAction AgentNets::act_deterministic(const GlobalState& s) const {
  std::vector<double> x(policy_.input_dim());
  policy_input(s, x);
  auto y = policy_.forward(x);
  return head_.mode(y);
}

void AgentNets::apply_policy_gradient(std::span<const double> grad) {
  if (grad.size() != policy_param_count()) throw nn::ShapeError("policy gradient has wrong size");
  std::vector<double> params(policy_param_count());
  auto net = policy_.params();
  std::copy(net.begin(), net.end(), params.begin());
  std::copy(head_.log_std().begin(), head_.log_std().end(), params.begin() + static_cast<std::ptrdiff_t>(net.size()));
  policy_opt_.step(params, grad);
  std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(net.size()), net.begin());
  std::copy(params.begin() + static_cast<std::ptrdiff_t>(net.size()), params.end(), head_.log_std().begin());
}

void AgentNets::apply_critic_gradient(std::span<const double> grad) { critic_opt_.step(critic_.params(), grad); }

Team::Team(const AgentGraph& graph, std::size_t state_dim, const StateScaling& scaling, const ActionSpace& actions,
           const AgentConfig& config, Rng& rng)
    : config_(config),
      policy_index_(kappa_neighborhood(graph, config.kappa_policy)),
      critic_index_(kappa_neighborhood(graph, config.kappa_critic)) {
  agents_.reserve(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    agents_.emplace_back(i, policy_index_.members(i), critic_index_.members(i), state_dim, scaling, actions, config,
                         rng);
  }
}

JointSample Team::act(const GlobalState& s, Rng& rng) const {
  JointSample out;
  out.action.reserve(agents_.size());
  out.log_prob.reserve(agents_.size());
  for (const auto& a : agents_) {
    auto sample = a.act(s, rng);
    out.action.push_back(std::move(sample.action));
    out.log_prob.push_back(sample.log_prob);
  }
  return out;
}

JointAction Team::act_deterministic(const GlobalState& s) const {
  JointAction out;
  out.reserve(agents_.size());
  for (const auto& a : agents_) out.push_back(a.act_deterministic(s));
  return out;
}

std::vector<double> Team::critic_values(const GlobalState& s) const {
  std::vector<double> v(agents_.size());
  for (std::size_t j = 0; j < agents_.size(); ++j) v[j] = agents_[j].extended_value(s);
  return v;
}

std::vector<double> Team::mixed_values(const GlobalState& s) const {
  auto v = critic_values(s);
  return mixed_value(v, critic_index_);
}

std::vector<double> mixed_value(std::span<const double> critic_values, const NeighborhoodIndex& index) {
  const std::size_t n = critic_values.size();
  if (index.size() != n) throw std::invalid_argument("critic value count does not match the neighborhood index");
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j : index.members(i)) sum += critic_values[j];
    out[i] = sum / static_cast<double>(n);
  }
  return out;
}

std::vector<std::vector<double>> return_targets(const std::vector<std::vector<double>>& rewards,
                                                const std::vector<bool>& dones, std::span<const double> bootstrap,
                                                double gamma, Bootstrap mode) {
  const std::size_t T = rewards.size();
  if (dones.size() != T) throw std::invalid_argument("return_targets: done flags and rewards differ in length");
  const std::size_t n = bootstrap.size();
  for (const auto& r : rewards) {
    if (r.size() != n) throw std::invalid_argument("return_targets: reward row does not match the agent count");
  }
  std::vector<std::vector<double>> out(T, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double acc = mode == Bootstrap::discounted ? bootstrap[i] : 0.0;
    bool reaches_end = true;
    for (std::size_t t = T; t-- > 0;) {
      if (dones[t]) {
        acc = 0.0;
        reaches_end = false;
      }
      acc = rewards[t][i] + gamma * acc;
      out[t][i] = acc + (mode == Bootstrap::literal && reaches_end ? bootstrap[i] : 0.0);
    }
  }
  return out;
}

void standardize(std::span<double> values) {
  if (values.size() < 2) return;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  const double sd = std::sqrt(var) + 1e-8;
  for (double& v : values) v = (v - mean) / sd;
}

PolicyLoss policy_loss(const AgentNets& nets, const PolicyBatch& batch, double clip_eps, double beta) {
  const std::size_t m = batch.inputs.rows();
  if (batch.actions.size() != m || batch.old_log_prob.size() != m || batch.advantage.size() != m) {
    throw nn::ShapeError("policy batch fields differ in length");
  }
  const nn::PolicyHead& head = nets.head();
  const std::size_t out_dim = head.net_output_dim();
  const std::size_t n_std = head.log_std().size();

  PolicyLoss result;
  result.grad.assign(nets.policy_param_count(), 0.0);
  if (m == 0) return result;

  nn::BatchTape tape;
  nn::forward_batch(nets.policy(), batch.inputs, tape);
  nn::Matrix grad_out(m, out_dim);
  std::vector<double> d_lp(out_dim);
  std::vector<double> d_h(out_dim);
  std::vector<double> d_lp_std(n_std);
  std::vector<double> d_h_std(n_std);
  const double inv_m = 1.0 / static_cast<double>(m);
  std::size_t clipped = 0;

  for (std::size_t b = 0; b < m; ++b) {
    auto y = tape.output().row(b);
    const double lp = head.log_prob(y, batch.actions[b]);
    const double ratio = std::exp(lp - batch.old_log_prob[b]);
    if (!std::isfinite(ratio)) {
      throw std::domain_error("policy ratio is not finite for agent " + std::to_string(nets.index()) + " (sample " +
                              std::to_string(b) + ", log-prob " + std::to_string(lp) + ", old " +
                              std::to_string(batch.old_log_prob[b]) + ")");
    }
    const double adv = batch.advantage[b];
    const double clipped_ratio = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    const double unclipped_obj = ratio * adv;
    const double clipped_obj = clipped_ratio * adv;
    const bool ratio_active = unclipped_obj <= clipped_obj;
    const double surrogate = std::min(unclipped_obj, clipped_obj);
    const double ent = head.entropy(y);
    if (std::abs(ratio - 1.0) > clip_eps) ++clipped;

    result.surrogate += surrogate * inv_m;
    result.entropy += ent * inv_m;
    result.mean_ratio += ratio * inv_m;
    result.loss += (-surrogate - beta * ent) * inv_m;

    // d loss / d log pi = -ratio * A where the unclipped branch is the minimum.
    const double coef = ratio_active ? -ratio * adv * inv_m : 0.0;
    head.log_prob_grad(y, batch.actions[b], d_lp, d_lp_std);
    head.entropy_grad(y, d_h, d_h_std);
    auto g = grad_out.row(b);
    for (std::size_t k = 0; k < out_dim; ++k) g[k] = coef * d_lp[k] - beta * inv_m * d_h[k];
    for (std::size_t k = 0; k < n_std; ++k) {
      result.grad[nets.policy().param_count() + k] += coef * d_lp_std[k] - beta * inv_m * d_h_std[k];
    }
  }
  result.clip_fraction = static_cast<double>(clipped) * inv_m;
  nn::backward_batch(nets.policy(), tape, grad_out,
                     std::span<double>(result.grad.data(), nets.policy().param_count()));
  return result;
}

CriticLoss critic_loss(const AgentNets& nets, const nn::Matrix& inputs, std::span<const double> targets,
                       const nn::BatchTape* tape) {
  const std::size_t m = inputs.rows();
  if (targets.size() != m) throw nn::ShapeError("critic targets do not match the batch size");
  CriticLoss result;
  result.grad.assign(nets.critic().param_count(), 0.0);
  if (m == 0) return result;
  nn::BatchTape local;
  if (tape == nullptr) {
    nn::forward_batch(nets.critic(), inputs, local);
    tape = &local;
  }
  nn::Matrix grad_out(m, 1);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t b = 0; b < m; ++b) {
    const double e = tape->output()(b, 0) - targets[b];
    result.loss += e * e * inv_m;
    grad_out(b, 0) = 2.0 * e * inv_m;
  }
  nn::backward_batch(nets.critic(), *tape, grad_out, result.grad);
  return result;
}

UpdateStats update_team(Team& team, std::span<const TrainSample* const> batch) {
  const std::size_t n = team.size();
  const std::size_t m = batch.size();
  UpdateStats stats;
  if (m == 0) return stats;
  const AgentConfig& cfg = team.config();
  const bool parallel = n > 1 && !in_parallel_region();

  // Frozen critics: values at s and s' for every agent.
  std::vector<nn::Matrix> critic_in(n);
  std::vector<nn::BatchTape> critic_tape(n);
  nn::Matrix v_now(m, n);
  nn::Matrix v_next(m, n);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t j = 0; j < n; ++j) {
    const AgentNets& a = team[j];
    const std::size_t dim = a.critic().input_dim();
    critic_in[j].resize(m, dim);
    nn::Matrix next_in(m, dim);
    for (std::size_t b = 0; b < m; ++b) {
      a.critic_input(batch[b]->t.s, critic_in[j].row(b));
      a.critic_input(batch[b]->t.s_next, next_in.row(b));
    }
    nn::forward_batch(a.critic(), critic_in[j], critic_tape[j]);
    nn::BatchTape next_tape;
    nn::forward_batch(a.critic(), next_in, next_tape);
    for (std::size_t b = 0; b < m; ++b) {
      v_now(b, j) = critic_tape[j].output()(b, 0);
      v_next(b, j) = next_tape.output()(b, 0);
    }
  }

  std::vector<UpdateStats> per_agent(n);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t i = 0; i < n; ++i) {
    AgentNets& a = team[i];
    const auto& hood = team.critic_index().members(i);
    PolicyBatch pb;
    pb.inputs.resize(m, a.policy().input_dim());
    pb.actions.resize(m);
    pb.old_log_prob.resize(m);
    pb.advantage.resize(m);
    std::vector<double> targets(m);
    for (std::size_t b = 0; b < m; ++b) {
      const TrainSample& s = *batch[b];
      a.policy_input(s.t.s, pb.inputs.row(b));
      pb.actions[b] = s.t.a[i];
      pb.old_log_prob[b] = s.old_log_prob[i];
      double mix_now = 0.0;
      double mix_next = 0.0;
      double mix_reward = 0.0;
      for (std::size_t j : hood) {
        mix_now += v_now(b, j);
        mix_next += v_next(b, j);
        mix_reward += s.t.r[j];
      }
      mix_now /= static_cast<double>(n);
      mix_next /= static_cast<double>(n);
      mix_reward /= static_cast<double>(n);
      const double reward = cfg.neighborhood_reward ? mix_reward : s.t.r[i];
      pb.advantage[b] = td_advantage(reward, s.t.d, mix_next, mix_now, cfg.gamma);
      targets[b] = s.return_target[i];
    }
    if (cfg.normalize_advantages) standardize(pb.advantage);

    auto pl = policy_loss(a, pb, cfg.clip_eps, cfg.entropy_beta);
    nn::clip_grad_norm(pl.grad, cfg.grad_clip);
    a.apply_policy_gradient(pl.grad);

    auto cl = critic_loss(a, critic_in[i], targets, &critic_tape[i]);
    nn::clip_grad_norm(cl.grad, cfg.grad_clip);
    a.apply_critic_gradient(cl.grad);

    per_agent[i] = {pl.loss, cl.loss, pl.entropy, pl.mean_ratio, pl.clip_fraction};
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  for (const auto& s : per_agent) {
    stats.policy_loss += s.policy_loss * inv_n;
    stats.critic_loss += s.critic_loss * inv_n;
    stats.entropy += s.entropy * inv_n;
    stats.mean_ratio += s.mean_ratio * inv_n;
    stats.clip_fraction += s.clip_fraction * inv_n;
  }
  return stats;
}

std::vector<TrainSample> make_train_samples(const Team& team, std::vector<RolloutStep>&& trajectory) {
  std::vector<TrainSample> out;
  if (trajectory.empty()) return out;
  const std::size_t T = trajectory.size();
  std::vector<std::vector<double>> rewards(T);
  std::vector<bool> dones(T);
  const double scale = team.config().reward_scale;
  for (std::size_t t = 0; t < T; ++t) {
    for (double& r : trajectory[t].t.r) r *= scale;
    rewards[t] = trajectory[t].t.r;
    dones[t] = trajectory[t].t.d;
  }
  std::vector<double> bootstrap(team.size(), 0.0);
  if (!dones.back()) bootstrap = team.critic_values(trajectory.back().t.s_next);
  auto targets = return_targets(rewards, dones, bootstrap, team.config().gamma, team.config().bootstrap);
  out.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    out.push_back({std::move(trajectory[t].t), std::move(trajectory[t].log_prob), std::move(targets[t])});
  }
  return out;
}

}  // namespace dmpo::agent
