#include "dmpo/model/local_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dmpo/nn/kernels.hpp"
#include "dmpo/parallel.hpp"

namespace dmpo::model {

Normalizer Normalizer::identity(std::size_t dim) {
  return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

void Normalizer::fit(std::span<const std::vector<double>> rows) {
  if (rows.empty()) return;
  const std::size_t dim = rows.front().size();
  mean.assign(dim, 0.0);
  stddev.assign(dim, 0.0);
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < dim; ++k) mean[k] += r[k];
  }
  for (auto& m : mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < dim; ++k) stddev[k] += (r[k] - mean[k]) * (r[k] - mean[k]);
  }
  for (auto& s : stddev) {
    s = std::sqrt(s / static_cast<double>(rows.size()));
    if (s < 1e-6) s = 1.0;
  }
}

LocalModel::LocalModel(std::size_t agent, std::vector<std::size_t> members, std::size_t state_dim,
                       ActionSpace actions, const ModelConfig& config, Rng& rng)
    : agent_(agent),
      members_(std::move(members)),
      state_dim_(state_dim),
      actions_(actions),
      residual_(config.residual),
      net_(nn::MlpSpec{members_.size() * state_dim + actions.encoding_dim(), config.hidden, state_dim + 1}),
      opt_(net_.param_count(), config.lr),
      input_norm_(Normalizer::identity(net_.input_dim())),
      target_norm_(Normalizer::identity(state_dim + 1)) {
  net_.init(rng, 1.0, 1.0);
}

void LocalModel::raw_input(const GlobalState& s, const AgentAction& a, std::vector<double>& out) const {
  project_state_into(s, members_, out);
  std::size_t base = out.size();
  out.resize(base + actions_.encoding_dim());
  actions_.encode(a, out.data() + base);
}

void LocalModel::normalized_input(const GlobalState& s, const AgentAction& a, std::vector<double>& out) const {
  raw_input(s, a, out);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = input_norm_.apply(k, out[k]);
}

void LocalModel::raw_target(const Transition& t, std::vector<double>& out) const {
  out.resize(state_dim_ + 1);
  for (std::size_t k = 0; k < state_dim_; ++k) {
    out[k] = t.s_next[agent_][k] - (residual_ ? t.s[agent_][k] : 0.0);
  }
  out[state_dim_] = t.r[agent_];
}

void LocalModel::predict(const GlobalState& s, const AgentAction& a, LocalState& next, double& reward) const {
  std::vector<double> x;
  normalized_input(s, a, x);
  auto y = net_.forward(x);
  next.resize(state_dim_);
  for (std::size_t k = 0; k < state_dim_; ++k) {
    next[k] = target_norm_.invert(k, y[k]) + (residual_ ? s[agent_][k] : 0.0);
  }
  reward = target_norm_.invert(state_dim_, y[state_dim_]);
}

void LocalModel::fit_normalizers(std::span<const Transition* const> data) {
  if (data.empty()) return;
  std::vector<std::vector<double>> inputs(data.size());
  std::vector<std::vector<double>> targets(data.size());
  for (std::size_t b = 0; b < data.size(); ++b) {
    raw_input(data[b]->s, data[b]->a[agent_], inputs[b]);
    raw_target(*data[b], targets[b]);
  }
  input_norm_.fit(inputs);
  target_norm_.fit(targets);
}

ModelSet::ModelSet(const AgentGraph& graph, std::size_t state_dim, ActionSpace actions, const ModelConfig& config,
                   Rng& rng)
    : config_(config) {
  auto hood = kappa_neighborhood(graph, config.kappa);
  for (std::size_t i = 0; i < graph.size(); ++i) {
    models_.emplace_back(i, hood.members(i), state_dim, actions, config, rng);
  }
}

StepPrediction ModelSet::predict(const GlobalState& s, const JointAction& a, Rng& /*rng*/) const {
  return predict(s, a);
}

StepPrediction ModelSet::predict(const GlobalState& s, const JointAction& a) const {
  StepPrediction out;
  out.s_next.resize(models_.size());
  out.r.resize(models_.size());
  for (std::size_t i = 0; i < models_.size(); ++i) {
    models_[i].predict(s, a[i], out.s_next[i], out.r[i]);
    bool finite = std::isfinite(out.r[i]);
    for (double v : out.s_next[i]) finite = finite && std::isfinite(v);
    if (!finite) throw std::domain_error("model prediction for agent " + std::to_string(i) + " is not finite");
  }
  return out;
}

ModelMetrics evaluate_models(const ModelSet& models, std::span<const Transition* const> data) {
  ModelMetrics m;
  const std::size_t n = models.size();
  m.state_mse.assign(n, 0.0);
  m.reward_mse.assign(n, 0.0);
  m.train_loss.assign(n, 0.0);
  if (data.empty()) return m;
  for (const Transition* t : data) {
    auto pred = models.predict(t->s, t->a);
    for (std::size_t i = 0; i < n; ++i) {
      double se = 0.0;
      for (std::size_t k = 0; k < pred.s_next[i].size(); ++k) {
        double e = pred.s_next[i][k] - t->s_next[i][k];
        se += e * e;
      }
      m.state_mse[i] += se;
      double re = pred.r[i] - t->r[i];
      m.reward_mse[i] += re * re;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    m.state_mse[i] /= static_cast<double>(data.size());
    m.reward_mse[i] /= static_cast<double>(data.size());
  }
  return m;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(const EnvBuffer& buffer,
                                                                            std::size_t every) {
  std::vector<std::size_t> fit;
  std::vector<std::size_t> held;
  for (std::size_t k = 0; k < buffer.size(); ++k) {
    if (every > 1 && buffer.seq_of(k) % every == 0) {
      held.push_back(k);
    } else {
      fit.push_back(k);
    }
  }
  if (fit.empty()) fit = held;
  if (held.empty()) held = fit;
  return {std::move(fit), std::move(held)};
}

ModelMetrics train_models(ModelSet& models, const EnvBuffer& buffer, std::size_t steps, std::size_t batch_size,
                          Rng& rng) {
  if (buffer.empty()) throw BufferError("cannot train models on an empty environment buffer");
  auto [fit, held] = holdout_split(buffer, models.config().holdout_every);
  std::vector<const Transition*> fit_data;
  fit_data.reserve(fit.size());
  for (std::size_t k : fit) fit_data.push_back(&buffer[k]);

  const std::size_t n = models.size();
  for (std::size_t i = 0; i < n; ++i) models[i].fit_normalizers(fit_data);

  std::vector<double> last_loss(n, 0.0);
  std::vector<std::size_t> batch(batch_size);
  for (std::size_t step = 0; step < steps; ++step) {
    for (auto& b : batch) b = rng.index(fit_data.size());
#pragma omp parallel for schedule(static) if (n > 1 && !in_parallel_region())
    for (std::size_t i = 0; i < n; ++i) {
      LocalModel& model = models[i];
      const std::size_t out_dim = model.state_dim() + 1;
      nn::Matrix x(batch_size, model.input_dim());
      nn::Matrix target(batch_size, out_dim);
      std::vector<double> buf;
      for (std::size_t r = 0; r < batch_size; ++r) {
        const Transition& t = *fit_data[batch[r]];
        model.normalized_input(t.s, t.a[i], buf);
        std::copy(buf.begin(), buf.end(), x.row(r).begin());
        model.raw_target(t, buf);
        for (std::size_t k = 0; k < out_dim; ++k) target(r, k) = model.target_normalizer().apply(k, buf[k]);
      }
      nn::BatchTape tape;
      nn::forward_batch(model.net(), x, tape);
      nn::Matrix grad_out(batch_size, out_dim);
      const double scale = 1.0 / static_cast<double>(batch_size * out_dim);
      double loss = 0.0;
      for (std::size_t r = 0; r < batch_size; ++r) {
        for (std::size_t k = 0; k < out_dim; ++k) {
          double e = tape.output()(r, k) - target(r, k);
          loss += e * e * scale;
          grad_out(r, k) = 2.0 * e * scale;
        }
      }
      std::vector<double> grad(model.net().param_count(), 0.0);
      nn::backward_batch(model.net(), tape, grad_out, grad);
      model.optimizer().step(model.net().params(), grad);
      last_loss[i] = loss;
    }
  }

  std::vector<const Transition*> held_data;
  held_data.reserve(held.size());
  for (std::size_t k : held) held_data.push_back(&buffer[k]);
  auto metrics = evaluate_models(models, held_data);
  metrics.train_loss = last_loss;
  return metrics;
}

std::vector<double> discrepancy_estimate(const ModelSet& models, std::span<const Transition* const> data,
                                         double alpha) {
  std::vector<double> d(models.size(), 0.0);
  if (data.empty() || alpha == 0.0) return d;
  for (const Transition* t : data) {
    auto pred = models.predict(t->s, t->a);
    for (std::size_t i = 0; i < models.size(); ++i) {
      double se = 0.0;
      for (std::size_t k = 0; k < pred.s_next[i].size(); ++k) {
        double e = pred.s_next[i][k] - t->s_next[i][k];
        se += e * e;
      }
      d[i] += std::sqrt(se);
    }
  }
  for (double& x : d) x *= alpha / static_cast<double>(data.size());
  return d;
}

}  // namespace dmpo::model
