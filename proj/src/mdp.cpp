#include "dmpo/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include "json.hpp"
#include <ostream>

namespace dmpo {

void ActionSpace::encode(std::span<const double> action, double* out) const {
  if (kind == Kind::discrete) {
    std::fill(out, out + size, 0.0);
    out[static_cast<std::size_t>(action[0])] = 1.0;
  } else {
    for (std::size_t k = 0; k < size; ++k) out[k] = std::clamp(action[k], low, high);
  }
}

bool ActionSpace::is_valid(std::span<const double> action) const {
  if (action.size() != stored_dim()) return false;
  if (kind == Kind::discrete) {
    double v = action[0];
    return v >= 0.0 && v < static_cast<double>(size) && v == std::floor(v);
  }
  return std::all_of(action.begin(), action.end(), [](double v) { return std::isfinite(v); });
}

StateScaling Env::scaling() const {
  return {std::vector<double>(state_dim(), 0.0), std::vector<double>(state_dim(), 1.0)};
}

double Transition::global_reward() const {
  double sum = 0.0;
  for (double x : r) sum += x;
  return r.empty() ? 0.0 : sum / static_cast<double>(r.size());
}

void validate_transition(const Transition& t, std::size_t n, std::size_t state_dim,
                         std::size_t action_dim) {
  auto fail = [](const std::string& what) { throw std::invalid_argument("transition: " + what); };
  if (t.s.size() != n || t.s_next.size() != n || t.a.size() != n || t.r.size() != n) {
    fail("expected " + std::to_string(n) + " agents in s, a, s_next and r");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (t.s[i].size() != state_dim || t.s_next[i].size() != state_dim) {
      fail("agent " + std::to_string(i) + " state has wrong dimension");
    }
    if (t.a[i].size() != action_dim) fail("agent " + std::to_string(i) + " action has wrong dimension");
    if (!std::isfinite(t.r[i])) fail("agent " + std::to_string(i) + " reward is not finite");
  }
}

double discounted_return(std::span<const double> rewards, double gamma) {
  double total = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) total = rewards[t] + gamma * total;
  return total;
}

void write_trace_jsonl(std::ostream& out, std::span<const Transition> trace) {
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto& t = trace[k];
    nlohmann::json line = {{"step", k}, {"s", t.s}, {"a", t.a}, {"r", t.r}, {"s_next", t.s_next}, {"d", t.d}};
    out << line.dump() << '\n';
  }
}

std::vector<Transition> read_trace_jsonl(std::istream& in) {
  std::vector<Transition> trace;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    Transition t;
    j.at("s").get_to(t.s);
    j.at("a").get_to(t.a);
    j.at("r").get_to(t.r);
    j.at("s_next").get_to(t.s_next);
    j.at("d").get_to(t.d);
    trace.push_back(std::move(t));
  }
  return trace;
}

}  // namespace dmpo
