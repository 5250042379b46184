#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dmpo/mdp.hpp"
#include "dmpo/rng.hpp"

namespace dmpo::nn {

/// Maps a network output to an action distribution: categorical over logits,
/// or diagonal Gaussian around a mean with a state-independent log-std vector.
class PolicyHead {
 public:
  enum class Kind { categorical, gaussian };

  static constexpr double kMinLogStd = -5.0;
  static constexpr double kMaxLogStd = 2.0;

  static PolicyHead categorical(std::size_t choices);
  static PolicyHead gaussian(std::size_t dim, double initial_log_std = 0.0);
  static PolicyHead for_action_space(const ActionSpace& space, double initial_log_std = 0.0);

  Kind kind() const { return kind_; }
  /// Logit count or mean dimension.
  std::size_t net_output_dim() const { return dim_; }
  std::size_t action_dim() const { return kind_ == Kind::categorical ? 1 : dim_; }

  /// Learned log-std (gaussian only); empty for categorical.
  std::vector<double>& log_std() { return log_std_; }
  const std::vector<double>& log_std() const { return log_std_; }
  double effective_log_std(std::size_t k) const;

  struct Sample {
    AgentAction action;
    double log_prob = 0.0;
  };

  Sample sample(std::span<const double> net_output, Rng& rng) const;
  double log_prob(std::span<const double> net_output, std::span<const double> action) const;
  /// Gradient of log_prob w.r.t. the net output and the log-std vector (d_log_std may be empty).
  void log_prob_grad(std::span<const double> net_output, std::span<const double> action, std::span<double> d_output,
                     std::span<double> d_log_std) const;
  double entropy(std::span<const double> net_output) const;
  void entropy_grad(std::span<const double> net_output, std::span<double> d_output, std::span<double> d_log_std) const;
  /// Deterministic action: argmax or mean.
  AgentAction mode(std::span<const double> net_output) const;
  /// Softmax probabilities (categorical only).
  std::vector<double> probabilities(std::span<const double> logits) const;

 private:
  PolicyHead(Kind kind, std::size_t dim) : kind_(kind), dim_(dim) {}
  void check(std::span<const double> net_output) const;

  Kind kind_;
  std::size_t dim_;
  std::vector<double> log_std_;
};

}  // namespace dmpo::nn
