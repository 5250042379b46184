#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "dmpo/rng.hpp"

namespace dmpo::nn {

enum class Activation { tanh, identity };

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 1;
  Activation activation = Activation::tanh;

  /// Layer widths from input to output.
  std::vector<std::size_t> widths() const;
  /// Sum over layers of (fan_in + 1) * fan_out.
  std::size_t param_count() const;
  void validate() const;
};

/// Offsets of one affine layer inside the flat parameter vector. Weights are
/// stored input-major: W[k * fan_out + j] connects input k to output j.
struct LayerLayout {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Fully connected network: hidden layers use the spec's activation, the
/// output layer is linear. Parameters live in one flat vector.
class Mlp {
 public:
  explicit Mlp(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  const std::vector<LayerLayout>& layout() const { return layout_; }
  std::size_t num_layers() const { return layout_.size(); }
  std::size_t param_count() const { return params_.size(); }
  std::size_t input_dim() const { return spec_.input_dim; }
  std::size_t output_dim() const { return spec_.output_dim; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  void set_params(std::span<const double> values);

  /// Orthogonal init scaled by `gain` for hidden layers and `output_gain`
  /// for the last layer; biases zero.
  void init(Rng& rng, double gain = 1.0, double output_gain = 1.0);

  /// Per-sample activations retained for backward().
  struct Workspace {
    std::vector<std::vector<double>> values;  // [0] = input, back() = output
    std::vector<double> delta;
    std::vector<double> delta_prev;
  };

  std::span<const double> forward(std::span<const double> input, Workspace& ws) const;
  std::vector<double> forward(std::span<const double> input) const;

  /// Accumulates d(out_grad . y)/d(params) into param_grad. Writes the input
  /// gradient when input_grad is non-empty.
  void backward(Workspace& ws, std::span<const double> out_grad, std::span<double> param_grad,
                std::span<double> input_grad = {}) const;

  /// Throws if any parameter is non-finite.
  void check_finite() const;

 private:
  MlpSpec spec_;
  std::vector<LayerLayout> layout_;
  std::vector<double> params_;
};

double activate(Activation a, double x);
/// Derivative expressed through the activation's output y.
double activate_grad_from_output(Activation a, double y);

}  // namespace dmpo::nn
