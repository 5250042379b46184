#include "dmpo/nn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dmpo/parallel.hpp"

namespace dmpo::nn {

namespace {

void prepare_tape(const Mlp& net, const Matrix& input, BatchTape& tape) {
  if (input.cols() != net.input_dim()) throw ShapeError("batch input width does not match the MLP");
  const auto& layout = net.layout();
  tape.values.resize(layout.size() + 1);
  tape.values[0] = input;
  for (std::size_t l = 0; l < layout.size(); ++l) {
    if (tape.values[l + 1].rows() != input.rows() || tape.values[l + 1].cols() != layout[l].fan_out) {
      tape.values[l + 1].resize(input.rows(), layout[l].fan_out);
    }
  }
}

void forward_sample(const Mlp& net, BatchTape& tape, std::size_t b) {
  const auto& layout = net.layout();
  const double* params = net.params().data();
  for (std::size_t l = 0; l < layout.size(); ++l) {
    const auto& layer = layout[l];
    const double* w = params + layer.weight_offset;
    const double* bias = params + layer.bias_offset;
    auto x = tape.values[l].row(b);
    auto y = tape.values[l + 1].row(b);
    std::copy(bias, bias + layer.fan_out, y.begin());
    for (std::size_t k = 0; k < layer.fan_in; ++k) {
      const double xk = x[k];
      const double* wrow = w + k * layer.fan_out;
      for (std::size_t j = 0; j < layer.fan_out; ++j) y[j] += xk * wrow[j];
    }
    if (l + 1 < layout.size()) {
      for (auto& v : y) v = activate(net.spec().activation, v);
    }
  }
}

void check_output(const Mlp& net, const BatchTape& tape) {
  for (double v : tape.output().data()) {
    if (!std::isfinite(v)) {
      net.check_finite();
      throw std::domain_error("MLP produced a non-finite output");
    }
  }
}

struct Scratch {
  std::vector<double> delta;
  std::vector<double> prev;
};

void backprop_sample(const Mlp& net, const BatchTape& tape, std::size_t b, std::span<const double> out_grad,
                     double* grad, Scratch& s) {
  const auto& layout = net.layout();
  const double* params = net.params().data();
  s.delta.assign(out_grad.begin(), out_grad.end());
  for (std::size_t l = layout.size(); l-- > 0;) {
    const auto& layer = layout[l];
    const double* w = params + layer.weight_offset;
    double* gw = grad + layer.weight_offset;
    double* gb = grad + layer.bias_offset;
    auto x = tape.values[l].row(b);
    const double* delta = s.delta.data();
    for (std::size_t j = 0; j < layer.fan_out; ++j) gb[j] += delta[j];
    for (std::size_t k = 0; k < layer.fan_in; ++k) {
      const double xk = x[k];
      double* grow = gw + k * layer.fan_out;
      for (std::size_t j = 0; j < layer.fan_out; ++j) grow[j] += xk * delta[j];
    }
    if (l == 0) break;
    s.prev.resize(layer.fan_in);
    for (std::size_t k = 0; k < layer.fan_in; ++k) {
      const double* wrow = w + k * layer.fan_out;
      double acc = 0.0;
      for (std::size_t j = 0; j < layer.fan_out; ++j) acc += wrow[j] * delta[j];
      s.prev[k] = acc * activate_grad_from_output(net.spec().activation, x[k]);
    }
    std::swap(s.delta, s.prev);
  }
}

void check_backward_shapes(const Mlp& net, const BatchTape& tape, const Matrix& out_grad,
                           std::span<double> param_grad) {
  if (tape.values.size() != net.num_layers() + 1) throw ShapeError("tape does not belong to this MLP");
  if (out_grad.rows() != tape.output().rows() || out_grad.cols() != net.output_dim()) {
    throw ShapeError("output gradient shape does not match the batch");
  }
  if (param_grad.size() != net.param_count()) throw ShapeError("parameter gradient has wrong size");
}

}  // namespace

void forward_batch(const Mlp& net, const Matrix& input, BatchTape& tape) {
  prepare_tape(net, input, tape);
  const std::size_t rows = input.rows();
  const std::size_t blocks = (rows + kSampleBlock - 1) / kSampleBlock;
  const bool parallel = blocks > 1 && !in_parallel_region();
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::size_t end = std::min(rows, (blk + 1) * kSampleBlock);
    for (std::size_t b = blk * kSampleBlock; b < end; ++b) forward_sample(net, tape, b);
  }
  check_output(net, tape);
}

void forward_batch_reference(const Mlp& net, const Matrix& input, BatchTape& tape) {
  prepare_tape(net, input, tape);
  for (std::size_t b = 0; b < input.rows(); ++b) forward_sample(net, tape, b);
  check_output(net, tape);
}

void backward_batch(const Mlp& net, const BatchTape& tape, const Matrix& out_grad, std::span<double> param_grad) {
  check_backward_shapes(net, tape, out_grad, param_grad);
  const std::size_t rows = out_grad.rows();
  const std::size_t blocks = (rows + kSampleBlock - 1) / kSampleBlock;
  const std::size_t np = net.param_count();
  if (blocks <= 1) {
    Scratch s;
    for (std::size_t b = 0; b < rows; ++b) backprop_sample(net, tape, b, out_grad.row(b), param_grad.data(), s);
    return;
  }
  std::vector<double> partial(blocks * np, 0.0);
  const bool parallel = !in_parallel_region();
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    Scratch s;
    double* g = partial.data() + blk * np;
    const std::size_t end = std::min(rows, (blk + 1) * kSampleBlock);
    for (std::size_t b = blk * kSampleBlock; b < end; ++b) backprop_sample(net, tape, b, out_grad.row(b), g, s);
  }
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const double* g = partial.data() + blk * np;
    for (std::size_t k = 0; k < np; ++k) param_grad[k] += g[k];
  }
}

void backward_batch_reference(const Mlp& net, const BatchTape& tape, const Matrix& out_grad,
                              std::span<double> param_grad) {
  check_backward_shapes(net, tape, out_grad, param_grad);
  Scratch s;
  for (std::size_t b = 0; b < out_grad.rows(); ++b) {
    backprop_sample(net, tape, b, out_grad.row(b), param_grad.data(), s);
  }
}

}  // namespace dmpo::nn
