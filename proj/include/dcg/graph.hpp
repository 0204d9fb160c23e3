#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dcg/errors.hpp"

namespace dcg {

enum class Topology { Full, Cycle, Line, Star, Empty };

inline std::string_view topology_name(Topology t) {
  switch (t) {
    case Topology::Full: return "full";
    case Topology::Cycle: return "cycle";
    case Topology::Line: return "line";
    case Topology::Star: return "star";
    case Topology::Empty: return "empty";
  }
  return "?";
}

inline Topology parse_topology(std::string_view s) {
  for (Topology t : {Topology::Full, Topology::Cycle, Topology::Line, Topology::Star, Topology::Empty})
    if (topology_name(t) == s) return t;
  throw ArgumentError("unknown topology '" + std::string(s) + "' (expected full, cycle, line, star, empty)");
}

using Edge = std::pair<std::size_t, std::size_t>;

/// Undirected graph over agents 0..n-1. Edges are stored as (min, max) in
/// sorted order; messages travel "forward" from the lower to the higher index.
class CoordinationGraph {
 public:
  CoordinationGraph(std::size_t n_agents, std::vector<Edge> edges) : n_(n_agents), edges_(std::move(edges)) {
    if (n_ == 0) throw ArgumentError("coordination graph needs at least one agent");
    for (auto& [i, j] : edges_) {
      if (i == j) throw TopologyError("self-loop on agent " + std::to_string(i));
      if (i > j) std::swap(i, j);
      if (j >= n_) throw TopologyError("edge endpoint " + std::to_string(j) + " out of range");
    }
    std::sort(edges_.begin(), edges_.end());
    if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end()) throw TopologyError("duplicate edge");
    incident_.resize(n_);
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      incident_[edges_[e].first].push_back(e);
      incident_[edges_[e].second].push_back(e);
    }
  }

  std::size_t n_agents() const { return n_; }
  std::size_t n_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(std::size_t e) const { return edges_[e]; }
  // Edge indices touching agent i.
  const std::vector<std::size_t>& incident(std::size_t i) const { return incident_[i]; }

  // Checks the stored invariants; true for any successfully constructed graph.
  bool valid() const {
    if (edges_.size() > n_ * (n_ - 1) / 2) return false;
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const auto [i, j] = edges_[e];
      if (!(i < j) || j >= n_) return false;
      if (e > 0 && !(edges_[e - 1] < edges_[e])) return false;
    }
    return true;
  }

  friend bool operator==(const CoordinationGraph& a, const CoordinationGraph& b) {
    return a.n_ == b.n_ && a.edges_ == b.edges_;
  }

 private:
  std::size_t n_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> incident_;
};

/// Builds one of the standard topologies over n agents (0-based):
/// full = all pairs, cycle = {i, (i+1) mod n}, line = {i, i+1},
/// star = {0, i}, empty = no edges.
inline CoordinationGraph build_topology(Topology kind, std::size_t n) {
  if (n == 0) throw ArgumentError("build_topology: n must be positive");
  std::vector<Edge> edges;
  switch (kind) {
    case Topology::Full:
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
      break;
    case Topology::Cycle:
      if (n < 3) throw TopologyError("cycle topology requires at least 3 agents, got " + std::to_string(n));
      for (std::size_t i = 0; i < n; ++i) edges.emplace_back(std::min(i, (i + 1) % n), std::max(i, (i + 1) % n));
      break;
    case Topology::Line:
      for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
      break;
    case Topology::Star:
      for (std::size_t i = 1; i < n; ++i) edges.emplace_back(0, i);
      break;
    case Topology::Empty:
      break;
  }
  return CoordinationGraph(n, std::move(edges));
}

inline bool is_acyclic(const CoordinationGraph& g) {
  std::vector<std::size_t> parent(g.n_agents());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [i, j] : g.edges()) {
    const std::size_t a = find(i), b = find(j);
    if (a == b) return false;
    parent[a] = b;
  }
  return true;
}

/// Longest shortest-path length between connected vertices (0 without edges).
/// Disconnected pairs are ignored; `connected` is false if any exist.
struct Diameter {
  std::size_t value = 0;
  bool connected = true;
};

inline Diameter diameter(const CoordinationGraph& g) {
  const std::size_t n = g.n_agents();
  Diameter d;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::size_t> dist(n, std::numeric_limits<std::size_t>::max());
    std::queue<std::size_t> q;
    dist[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t e : g.incident(u)) {
        const auto [i, j] = g.edge(e);
        const std::size_t v = i == u ? j : i;
        if (dist[v] == std::numeric_limits<std::size_t>::max()) {
          dist[v] = dist[u] + 1;
          q.push(v);
        }
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (dist[v] == std::numeric_limits<std::size_t>::max())
        d.connected = false;
      else
        d.value = std::max(d.value, dist[v]);
    }
  }
  return d;
}

}  // namespace dcg
