#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace dmpo {

using LocalState = std::vector<double>;
using GlobalState = std::vector<LocalState>;

struct GraphError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Stationary undirected communication graph over agents 0..n-1.
class AgentGraph {
 public:
  using Edge = std::pair<std::size_t, std::size_t>;

  /// Throws GraphError on out-of-range endpoints, self-loops or duplicate edges.
  AgentGraph(std::size_t n, std::vector<Edge> edges);

  static AgentGraph chain(std::size_t n);
  static AgentGraph ring(std::size_t n);

  std::size_t size() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::size_t>& adjacent(std::size_t i) const { return adjacency_.at(i); }
  bool has_edge(std::size_t i, std::size_t j) const;

  /// Hop distances from `source`; unreachable agents get size().
  std::vector<std::size_t> distances_from(std::size_t source) const;

  /// Largest finite hop distance between any pair of agents.
  std::size_t diameter() const;

 private:
  std::size_t n_;
  std::vector<Edge> edges_;  // stored with first < second
  std::vector<std::vector<std::size_t>> adjacency_;
};

/// Precomputed kappa-hop neighborhoods. members(i) is sorted ascending and
/// always contains i.
class NeighborhoodIndex {
 public:
  NeighborhoodIndex(std::size_t kappa, std::vector<std::vector<std::size_t>> members)
      : kappa_(kappa), members_(std::move(members)) {}

  std::size_t kappa() const { return kappa_; }
  std::size_t size() const { return members_.size(); }
  const std::vector<std::size_t>& members(std::size_t i) const { return members_.at(i); }
  bool contains(std::size_t i, std::size_t j) const;

  /// All agents not in members(i), ascending.
  std::vector<std::size_t> complement(std::size_t i) const;

 private:
  std::size_t kappa_;
  std::vector<std::vector<std::size_t>> members_;
};

NeighborhoodIndex kappa_neighborhood(const AgentGraph& graph, std::size_t kappa);

/// Concatenates the local states of `members` in the order given (callers pass
/// ascending indices). Throws std::out_of_range on a bad member index.
std::vector<double> project_state(std::span<const LocalState> states,
                                  std::span<const std::size_t> members);

/// Same as above, writing into `out` (resized as needed).
void project_state_into(std::span<const LocalState> states, std::span<const std::size_t> members,
                        std::vector<double>& out);

}  // namespace dmpo
