#include "dmpo/nn/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dmpo::nn {

std::vector<std::size_t> MlpSpec::widths() const {
  std::vector<std::size_t> w{input_dim};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(output_dim);
  return w;
}

std::size_t MlpSpec::param_count() const {
  auto w = widths();
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) total += (w[l] + 1) * w[l + 1];
  return total;
}

void MlpSpec::validate() const {
  for (std::size_t w : widths()) {
    if (w == 0) throw ShapeError("MLP layer widths must be positive");
  }
}

double activate(Activation a, double x) { return a == Activation::tanh ? std::tanh(x) : x; }

double activate_grad_from_output(Activation a, double y) { return a == Activation::tanh ? 1.0 - y * y : 1.0; }

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  auto w = spec_.widths();
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    LayerLayout layer;
    layer.fan_in = w[l];
    layer.fan_out = w[l + 1];
    layer.weight_offset = offset;
    offset += layer.fan_in * layer.fan_out;
    layer.bias_offset = offset;
    offset += layer.fan_out;
    layout_.push_back(layer);
  }
  params_.assign(offset, 0.0);
}

void Mlp::set_params(std::span<const double> values) {
  if (values.size() != params_.size()) {
    throw ShapeError("parameter vector has " + std::to_string(values.size()) + " entries, expected " +
                     std::to_string(params_.size()));
  }
  std::copy(values.begin(), values.end(), params_.begin());
}

namespace {

// Fills a rows x cols matrix (row-major) with orthonormal rows or columns.
void orthogonal_fill(std::vector<double>& m, std::size_t rows, std::size_t cols, Rng& rng) {
  for (auto& x : m) x = rng.normal();
  const bool by_rows = rows <= cols;
  const std::size_t count = by_rows ? rows : cols;
  const std::size_t len = by_rows ? cols : rows;
  auto at = [&](std::size_t v, std::size_t k) -> double& { return by_rows ? m[v * cols + k] : m[k * cols + v]; };
  for (std::size_t v = 0; v < count; ++v) {
    for (std::size_t u = 0; u < v; ++u) {
      double dot = 0.0;
      for (std::size_t k = 0; k < len; ++k) dot += at(v, k) * at(u, k);
      for (std::size_t k = 0; k < len; ++k) at(v, k) -= dot * at(u, k);
    }
    double norm = 0.0;
    for (std::size_t k = 0; k < len; ++k) norm += at(v, k) * at(v, k);
    norm = std::sqrt(norm);
    if (norm < 1e-12) norm = 1.0;
    for (std::size_t k = 0; k < len; ++k) at(v, k) /= norm;
  }
}

}  // namespace

void Mlp::init(Rng& rng, double gain, double output_gain) {
  std::fill(params_.begin(), params_.end(), 0.0);
  for (std::size_t l = 0; l < layout_.size(); ++l) {
    const auto& layer = layout_[l];
    std::vector<double> m(layer.fan_in * layer.fan_out);
    orthogonal_fill(m, layer.fan_in, layer.fan_out, rng);
    double g = l + 1 == layout_.size() ? output_gain : gain;
    for (std::size_t k = 0; k < m.size(); ++k) params_[layer.weight_offset + k] = g * m[k];
  }
}

std::span<const double> Mlp::forward(std::span<const double> input, Workspace& ws) const {
  if (input.size() != spec_.input_dim) {
    throw ShapeError("MLP input has " + std::to_string(input.size()) + " entries, expected " +
                     std::to_string(spec_.input_dim));
  }
  ws.values.resize(layout_.size() + 1);
  ws.values[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < layout_.size(); ++l) {
    const auto& layer = layout_[l];
    const double* w = params_.data() + layer.weight_offset;
    const double* b = params_.data() + layer.bias_offset;
    const auto& x = ws.values[l];
    auto& y = ws.values[l + 1];
    y.assign(b, b + layer.fan_out);
    for (std::size_t k = 0; k < layer.fan_in; ++k) {
      const double xk = x[k];
      const double* row = w + k * layer.fan_out;
      for (std::size_t j = 0; j < layer.fan_out; ++j) y[j] += xk * row[j];
    }
    if (l + 1 < layout_.size()) {
      for (auto& v : y) v = activate(spec_.activation, v);
    }
  }
  const auto& out = ws.values.back();
  for (double v : out) {
    if (!std::isfinite(v)) {
      check_finite();
      throw std::domain_error("MLP produced a non-finite output (input not finite?)");
    }
  }
  return out;
}

std::vector<double> Mlp::forward(std::span<const double> input) const {
  Workspace ws;
  auto out = forward(input, ws);
  return {out.begin(), out.end()};
}

void Mlp::backward(Workspace& ws, std::span<const double> out_grad, std::span<double> param_grad,
                   std::span<double> input_grad) const {
  if (out_grad.size() != spec_.output_dim || param_grad.size() != params_.size() ||
      ws.values.size() != layout_.size() + 1) {
    throw ShapeError("MLP backward called with inconsistent shapes");
  }
  if (!input_grad.empty() && input_grad.size() != spec_.input_dim) throw ShapeError("MLP input gradient has wrong size");
  ws.delta.assign(out_grad.begin(), out_grad.end());
  for (std::size_t l = layout_.size(); l-- > 0;) {
    const auto& layer = layout_[l];
    const double* w = params_.data() + layer.weight_offset;
    double* gw = param_grad.data() + layer.weight_offset;
    double* gb = param_grad.data() + layer.bias_offset;
    const auto& x = ws.values[l];
    const auto& delta = ws.delta;
    for (std::size_t j = 0; j < layer.fan_out; ++j) gb[j] += delta[j];
    for (std::size_t k = 0; k < layer.fan_in; ++k) {
      const double xk = x[k];
      double* grow = gw + k * layer.fan_out;
      for (std::size_t j = 0; j < layer.fan_out; ++j) grow[j] += xk * delta[j];
    }
    if (l == 0 && input_grad.empty()) break;
    ws.delta_prev.assign(layer.fan_in, 0.0);
    for (std::size_t k = 0; k < layer.fan_in; ++k) {
      const double* row = w + k * layer.fan_out;
      double acc = 0.0;
      for (std::size_t j = 0; j < layer.fan_out; ++j) acc += row[j] * delta[j];
      ws.delta_prev[k] = acc;
    }
    if (l > 0) {
      for (std::size_t k = 0; k < layer.fan_in; ++k) {
        ws.delta_prev[k] *= activate_grad_from_output(spec_.activation, x[k]);
      }
    } else {
      std::copy(ws.delta_prev.begin(), ws.delta_prev.end(), input_grad.begin());
    }
    std::swap(ws.delta, ws.delta_prev);
  }
}

void Mlp::check_finite() const {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (!std::isfinite(params_[k])) {
      throw std::domain_error("MLP parameter " + std::to_string(k) + " is not finite");
    }
  }
}

}  // namespace dmpo::nn
