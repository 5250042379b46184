#include "dmpo/topology.hpp"

#include <algorithm>
#include <deque>
#include <string>

namespace dmpo {

AgentGraph::AgentGraph(std::size_t n, std::vector<Edge> edges) : n_(n), adjacency_(n) {
  if (n == 0) throw GraphError("graph needs at least one agent");
  for (auto [a, b] : edges) {
    if (a >= n || b >= n) {
      throw GraphError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                       ") has an endpoint outside [0," + std::to_string(n) + ")");
    }
    if (a == b) throw GraphError("self-loop on agent " + std::to_string(a));
    Edge e = a < b ? Edge{a, b} : Edge{b, a};
    if (std::find(edges_.begin(), edges_.end(), e) != edges_.end()) {
      throw GraphError("duplicate edge (" + std::to_string(a) + "," + std::to_string(b) + ")");
    }
    edges_.push_back(e);
    adjacency_[a].push_back(b);
    adjacency_[b].push_back(a);
  }
  for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());
}

AgentGraph AgentGraph::chain(std::size_t n) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return AgentGraph(n, std::move(edges));
}

AgentGraph AgentGraph::ring(std::size_t n) {
  if (n < 3) return chain(n);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
  return AgentGraph(n, std::move(edges));
}

bool AgentGraph::has_edge(std::size_t i, std::size_t j) const {
  const auto& adj = adjacency_.at(i);
  return std::binary_search(adj.begin(), adj.end(), j);
}

std::vector<std::size_t> AgentGraph::distances_from(std::size_t source) const {
  std::vector<std::size_t> dist(n_, n_);
  std::deque<std::size_t> frontier{source};
  dist.at(source) = 0;
  while (!frontier.empty()) {
    std::size_t u = frontier.front();
    frontier.pop_front();
    for (std::size_t v : adjacency_[u]) {
      if (dist[v] == n_) {
        dist[v] = dist[u] + 1;
        frontier.push_back(v);
      }
    }
  }
  return dist;
}

std::size_t AgentGraph::diameter() const {
  std::size_t best = 0;
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t d : distances_from(i)) {
      if (d != n_) best = std::max(best, d);
    }
  }
  return best;
}

bool NeighborhoodIndex::contains(std::size_t i, std::size_t j) const {
  const auto& m = members_.at(i);
  return std::binary_search(m.begin(), m.end(), j);
}

std::vector<std::size_t> NeighborhoodIndex::complement(std::size_t i) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < members_.size(); ++j) {
    if (!contains(i, j)) out.push_back(j);
  }
  return out;
}

NeighborhoodIndex kappa_neighborhood(const AgentGraph& graph, std::size_t kappa) {
  std::vector<std::vector<std::size_t>> members(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    auto dist = graph.distances_from(i);
    for (std::size_t j = 0; j < graph.size(); ++j) {
      if (dist[j] <= kappa) members[i].push_back(j);
    }
  }
  return NeighborhoodIndex(kappa, std::move(members));
}

void project_state_into(std::span<const LocalState> states, std::span<const std::size_t> members,
                        std::vector<double>& out) {
  out.clear();
  for (std::size_t j : members) {
    if (j >= states.size()) {
      throw std::out_of_range("projection member " + std::to_string(j) + " outside state of " +
                              std::to_string(states.size()) + " agents");
    }
    out.insert(out.end(), states[j].begin(), states[j].end());
  }
}

std::vector<double> project_state(std::span<const LocalState> states,
                                  std::span<const std::size_t> members) {
  std::vector<double> out;
  project_state_into(states, members, out);
  return out;
}

}  // namespace dmpo
