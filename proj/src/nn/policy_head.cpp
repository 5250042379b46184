#include "dmpo/nn/policy_head.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dmpo::nn {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

double log_sum_exp(std::span<const double> x) {
  double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

PolicyHead PolicyHead::categorical(std::size_t choices) {
  if (choices == 0) throw std::invalid_argument("categorical head needs at least one choice");
  return PolicyHead(Kind::categorical, choices);
}

PolicyHead PolicyHead::gaussian(std::size_t dim, double initial_log_std) {
  if (dim == 0) throw std::invalid_argument("gaussian head needs a positive dimension");
  PolicyHead head(Kind::gaussian, dim);
  head.log_std_.assign(dim, initial_log_std);
  return head;
}

PolicyHead PolicyHead::for_action_space(const ActionSpace& space, double initial_log_std) {
  return space.kind == ActionSpace::Kind::discrete ? categorical(space.size) : gaussian(space.size, initial_log_std);
}

double PolicyHead::effective_log_std(std::size_t k) const {
  return std::clamp(log_std_.at(k), kMinLogStd, kMaxLogStd);
}

void PolicyHead::check(std::span<const double> net_output) const {
  if (net_output.size() != dim_) throw std::invalid_argument("policy head: network output has wrong size");
  for (double v : net_output) {
    if (!std::isfinite(v)) throw std::domain_error("policy head: non-finite network output");
  }
}

std::vector<double> PolicyHead::probabilities(std::span<const double> logits) const {
  check(logits);
  double lse = log_sum_exp(logits);
  std::vector<double> p(logits.size());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::exp(logits[k] - lse);
  return p;
}

PolicyHead::Sample PolicyHead::sample(std::span<const double> net_output, Rng& rng) const {
  check(net_output);
  Sample out;
  if (kind_ == Kind::categorical) {
    auto p = probabilities(net_output);
    double u = rng.uniform();
    std::size_t pick = p.size() - 1;
    double acc = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      acc += p[k];
      if (u < acc) {
        pick = k;
        break;
      }
    }
    out.action = {static_cast<double>(pick)};
  } else {
    out.action.resize(dim_);
    for (std::size_t k = 0; k < dim_; ++k) {
      out.action[k] = net_output[k] + std::exp(effective_log_std(k)) * rng.normal();
    }
  }
  out.log_prob = log_prob(net_output, out.action);
  return out;
}

double PolicyHead::log_prob(std::span<const double> net_output, std::span<const double> action) const {
  check(net_output);
  if (kind_ == Kind::categorical) {
    auto a = static_cast<std::size_t>(action[0]);
    if (a >= dim_) throw std::invalid_argument("categorical action index out of range");
    return net_output[a] - log_sum_exp(net_output);
  }
  if (action.size() != dim_) throw std::invalid_argument("gaussian action has wrong dimension");
  double lp = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) {
    double ls = effective_log_std(k);
    double z = (action[k] - net_output[k]) * std::exp(-ls);
    lp += -0.5 * z * z - ls - kHalfLog2Pi;
  }
  return lp;
}

void PolicyHead::log_prob_grad(std::span<const double> net_output, std::span<const double> action,
                               std::span<double> d_output, std::span<double> d_log_std) const {
  check(net_output);
  if (kind_ == Kind::categorical) {
    auto p = probabilities(net_output);
    auto a = static_cast<std::size_t>(action[0]);
    for (std::size_t k = 0; k < dim_; ++k) d_output[k] = (k == a ? 1.0 : 0.0) - p[k];
    return;
  }
  for (std::size_t k = 0; k < dim_; ++k) {
    double ls = effective_log_std(k);
    double inv = std::exp(-ls);
    double z = (action[k] - net_output[k]) * inv;
    d_output[k] = z * inv;
    if (!d_log_std.empty()) {
      bool clamped = log_std_[k] < kMinLogStd || log_std_[k] > kMaxLogStd;
      d_log_std[k] = clamped ? 0.0 : z * z - 1.0;
    }
  }
}

double PolicyHead::entropy(std::span<const double> net_output) const {
  check(net_output);
  if (kind_ == Kind::categorical) {
    auto p = probabilities(net_output);
    double lse = log_sum_exp(net_output);
    double h = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) {
      if (p[k] > 0.0) h -= p[k] * (net_output[k] - lse);
    }
    return h;
  }
  double h = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) h += effective_log_std(k) + kHalfLog2Pi + 0.5;
  return h;
}

void PolicyHead::entropy_grad(std::span<const double> net_output, std::span<double> d_output,
                              std::span<double> d_log_std) const {
  check(net_output);
  if (kind_ == Kind::categorical) {
    auto p = probabilities(net_output);
    double lse = log_sum_exp(net_output);
    double h = entropy(net_output);
    for (std::size_t k = 0; k < dim_; ++k) {
      double logp = net_output[k] - lse;
      d_output[k] = p[k] > 0.0 ? -p[k] * (logp + h) : 0.0;
    }
    return;
  }
  std::fill(d_output.begin(), d_output.end(), 0.0);
  if (!d_log_std.empty()) {
    for (std::size_t k = 0; k < dim_; ++k) {
      bool clamped = log_std_[k] < kMinLogStd || log_std_[k] > kMaxLogStd;
      d_log_std[k] = clamped ? 0.0 : 1.0;
    }
  }
}

AgentAction PolicyHead::mode(std::span<const double> net_output) const {
  check(net_output);
  if (kind_ == Kind::categorical) {
    auto it = std::max_element(net_output.begin(), net_output.end());
    return {static_cast<double>(it - net_output.begin())};
  }
  return {net_output.begin(), net_output.end()};
}

}  // namespace dmpo::nn
