#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dcg/errors.hpp"
#include "dcg/graph.hpp"
#include "dcg/numgrad/tensor.hpp"
#include "dcg/rng.hpp"

namespace dcg {

/// Stand-in for -infinity on unavailable utilities. Finite so that the
/// reverse-message subtraction never produces inf - inf.
inline constexpr double kNegLarge = -1e10;

using JointAction = std::vector<std::size_t>;
using AvailMask = std::vector<std::vector<bool>>;  // [agent][action]

/// Utility and payoff tensors of a coordination graph for one timestep.
/// f_e[e, a, b] is indexed by the lower-index agent's action a.
struct AnnotatedGraph {
  CoordinationGraph graph;
  ng::Tensor f_v;  // [n x A], unavailable entries hold kNegLarge
  ng::Tensor f_e;  // [|E| x A x A]
  AvailMask avail;
  std::size_t n_actions = 0;

  AnnotatedGraph(CoordinationGraph g, std::size_t a)
      : graph(std::move(g)),
        f_v({graph.n_agents(), a}),
        f_e({graph.n_edges(), a, a}),
        avail(graph.n_agents(), std::vector<bool>(a, true)),
        n_actions(a) {}

  std::size_t n_agents() const { return graph.n_agents(); }

  // Writes the sentinel into every unavailable utility entry.
  void apply_mask() {
    for (std::size_t i = 0; i < n_agents(); ++i)
      for (std::size_t a = 0; a < n_actions; ++a)
        if (!avail[i][a]) f_v.at(i, a) = kNegLarge;
  }
};

/// (1/|V|) sum_i f_v[i, a_i] + (1/|E|) sum_e f_e[e, a_i, a_j] + bias.
/// The payoff term is dropped entirely for graphs without edges.
inline double q_value(const AnnotatedGraph& ag, const JointAction& a, std::optional<double> state_bias = std::nullopt) {
  const std::size_t n = ag.n_agents();
  if (a.size() != n) throw ArgumentError("q_value: joint action has " + std::to_string(a.size()) + " entries, expected " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i)
    if (a[i] >= ag.n_actions) throw ArgumentError("q_value: action " + std::to_string(a[i]) + " of agent " + std::to_string(i) + " out of range");
  double util = 0.0;
  for (std::size_t i = 0; i < n; ++i) util += ag.f_v.at(i, a[i]);
  double q = util / static_cast<double>(n);
  const std::size_t m = ag.graph.n_edges();
  if (m > 0) {
    double pay = 0.0;
    for (std::size_t e = 0; e < m; ++e) {
      const auto [i, j] = ag.graph.edge(e);
      pay += ag.f_e.at(e, a[i], a[j]);
    }
    q += pay / static_cast<double>(m);
  }
  return q + state_bias.value_or(0.0);
}

namespace detail {

inline void require_feasible(const AvailMask& avail) {
  for (std::size_t i = 0; i < avail.size(); ++i) {
    bool any = false;
    for (bool b : avail[i]) any = any || b;
    if (!any) throw InfeasibleError("agent " + std::to_string(i) + " has no available action");
  }
}

// Lowest-index argmax over the available entries.
inline std::size_t masked_argmax(const double* values, const std::vector<bool>& avail) {
  std::size_t best = avail.size();
  for (std::size_t a = 0; a < avail.size(); ++a)
    if (avail[a] && (best == avail.size() || values[a] > values[best])) best = a;
  return best;
}

}  // namespace detail

struct GreedyResult {
  JointAction action;
  double value = 0.0;
  // Candidate value after 0, 1, ..., k passes (index 0 is message-free).
  std::vector<double> candidate_values;
};

/// Max-plus action selection with k synchronous passes. Each pass updates
/// every edge's forward (lower -> higher index) and backward messages from
/// the previous pass, rebuilds the per-agent values, and evaluates the
/// resulting joint action exactly; the best candidate seen is returned.
inline GreedyResult greedy_maxplus(const AnnotatedGraph& ag, std::size_t k, bool normalize) {
  if (k == 0) throw ArgumentError("greedy_maxplus: k must be at least 1");
  detail::require_feasible(ag.avail);
  const std::size_t n = ag.n_agents();
  const std::size_t m = ag.graph.n_edges();
  const std::size_t A = ag.n_actions;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_m = m ? 1.0 / static_cast<double>(m) : 0.0;

  std::vector<double> q(n * A);
  for (std::size_t i = 0; i < n * A; ++i) q[i] = ag.f_v[i] * inv_n;
  std::vector<double> fwd(m * A, 0.0), bwd(m * A, 0.0);
  std::vector<double> next_fwd(m * A), next_bwd(m * A);

  GreedyResult res;
  JointAction cand(n);
  auto evaluate_candidate = [&]() {
    for (std::size_t i = 0; i < n; ++i) cand[i] = detail::masked_argmax(&q[i * A], ag.avail[i]);
    const double v = q_value(ag, cand);
    res.candidate_values.push_back(v);
    if (res.action.empty() || v > res.value) {
      res.action = cand;
      res.value = v;
    }
  };
  evaluate_candidate();

  for (std::size_t pass = 0; pass < k; ++pass) {
    for (std::size_t e = 0; e < m; ++e) {
      const auto [i, j] = ag.graph.edge(e);
      const auto& avail_i = ag.avail[i];
      const auto& avail_j = ag.avail[j];
      // forward: maximize the sender i for each receiver action b
      for (std::size_t b = 0; b < A; ++b) {
        double best = 0.0;
        bool first = true;
        for (std::size_t a = 0; a < A; ++a) {
          if (!avail_i[a]) continue;
          const double v = (q[i * A + a] - bwd[e * A + a]) + inv_m * ag.f_e.at(e, a, b);
          if (first || v > best) best = v, first = false;
        }
        next_fwd[e * A + b] = best;
      }
      // backward: maximize the sender j for each receiver action a
      for (std::size_t a = 0; a < A; ++a) {
        double best = 0.0;
        bool first = true;
        for (std::size_t b = 0; b < A; ++b) {
          if (!avail_j[b]) continue;
          const double v = (q[j * A + b] - fwd[e * A + b]) + inv_m * ag.f_e.at(e, a, b);
          if (first || v > best) best = v, first = false;
        }
        next_bwd[e * A + a] = best;
      }
      if (normalize) {
        auto shift = [A](double* msg, const std::vector<bool>& receiver) {
          double s = 0.0;
          std::size_t c = 0;
          for (std::size_t x = 0; x < A; ++x)
            if (receiver[x]) s += msg[x], ++c;
          const double mean = s / static_cast<double>(c);
          for (std::size_t x = 0; x < A; ++x) msg[x] -= mean;
        };
        shift(&next_fwd[e * A], avail_j);
        shift(&next_bwd[e * A], avail_i);
      }
    }
    fwd.swap(next_fwd);
    bwd.swap(next_bwd);
    for (std::size_t i = 0; i < n * A; ++i) q[i] = ag.f_v[i] * inv_n;
    for (std::size_t e = 0; e < m; ++e) {
      const auto [i, j] = ag.graph.edge(e);
      for (std::size_t x = 0; x < A; ++x) {
        q[j * A + x] += fwd[e * A + x];
        q[i * A + x] += bwd[e * A + x];
      }
    }
    evaluate_candidate();
  }
  return res;
}

/// Exhaustive maximization over available joint actions; ties resolve to the
/// lexicographically smallest joint action.
inline std::pair<JointAction, double> brute_force(const AnnotatedGraph& ag, std::size_t cap = 1'000'000) {
  detail::require_feasible(ag.avail);
  const std::size_t n = ag.n_agents();
  std::vector<std::vector<std::size_t>> choices(n);
  double count = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < ag.n_actions; ++a)
      if (ag.avail[i][a]) choices[i].push_back(a);
    count *= static_cast<double>(choices[i].size());
  }
  if (count > static_cast<double>(cap))
    throw SizeError("brute_force: " + std::to_string(static_cast<long double>(count)) + " joint actions exceed cap " + std::to_string(cap));

  std::vector<std::size_t> pos(n, 0);
  JointAction a(n), best;
  double best_value = 0.0;
  while (true) {
    for (std::size_t i = 0; i < n; ++i) a[i] = choices[i][pos[i]];
    const double v = q_value(ag, a);
    if (best.empty() || v > best_value) best = a, best_value = v;
    std::size_t i = n;
    while (i > 0) {
      --i;
      if (++pos[i] < choices[i].size()) break;
      pos[i] = 0;
      if (i == 0) return {best, best_value};
    }
    if (n == 0) break;
  }
  return {best, best_value};
}

using JointValueFn = std::function<double(const JointAction&)>;

/// Coordinate ascent from a uniformly random available joint action: agents
/// 0..n-1 in turn switch to their best response while the others stay fixed.
/// Stops after a sweep without improvement or after max_iters sweeps.
inline std::pair<JointAction, double> coordinate_ascent(const JointValueFn& value_fn, const AvailMask& avail,
                                                        std::size_t max_iters, Rng& rng) {
  if (max_iters == 0) throw ArgumentError("coordinate_ascent: max_iters must be at least 1");
  detail::require_feasible(avail);
  const std::size_t n = avail.size();
  JointAction a(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> opts;
    for (std::size_t x = 0; x < avail[i].size(); ++x)
      if (avail[i][x]) opts.push_back(x);
    a[i] = opts[rng.uniform_int(opts.size())];
  }
  double current = value_fn(a);
  for (std::size_t it = 0; it < max_iters; ++it) {
    bool improved = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t keep = a[i];
      std::size_t best_action = keep;
      double best_value = current;
      for (std::size_t x = 0; x < avail[i].size(); ++x) {
        if (!avail[i][x] || x == keep) continue;
        a[i] = x;
        const double v = value_fn(a);
        if (v > best_value) best_value = v, best_action = x;
      }
      a[i] = best_action;
      if (best_action != keep) {
        current = best_value;
        improved = true;
      }
    }
    if (!improved) break;
  }
  return {a, current};
}

}  // namespace dcg
