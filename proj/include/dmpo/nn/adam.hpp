#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dmpo::nn {

/// Adaptive-moment optimizer state for one parameter vector. Minimizes.
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  Adam(std::size_t size, double learning_rate);

  /// Bias-corrected update params -= lr * m_hat / (sqrt(v_hat) + eps).
  /// Throws std::domain_error naming the first non-finite gradient entry.
  void step(std::span<double> params, std::span<const double> grads);

  std::size_t size() const { return m_.size(); }
  std::size_t steps() const { return steps_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }

 private:
  double lr_;
  std::size_t steps_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

/// Rescales g in place so its L2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(std::span<double> g, double max_norm);

}  // namespace dmpo::nn
