#include "dmpo/nn/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dmpo::nn {

Adam::Adam(std::size_t size, double learning_rate) : lr_(learning_rate), m_(size, 0.0), v_(size, 0.0) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("Adam learning rate must be positive");
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("Adam step: parameter/gradient layout mismatch");
  }
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (!std::isfinite(grads[k])) {
      throw std::domain_error("Adam step: gradient entry " + std::to_string(k) + " is " + std::to_string(grads[k]) +
                              " after " + std::to_string(steps_) + " steps");
    }
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < grads.size(); ++k) {
    m_[k] = kBeta1 * m_[k] + (1.0 - kBeta1) * grads[k];
    v_[k] = kBeta2 * v_[k] + (1.0 - kBeta2) * grads[k] * grads[k];
    params[k] -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + kEpsilon);
  }
}

double clip_grad_norm(std::span<double> g, double max_norm) {
  double sq = 0.0;
  for (double x : g) sq += x * x;
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    for (double& x : g) x *= scale;
  }
  return norm;
}

}  // namespace dmpo::nn
