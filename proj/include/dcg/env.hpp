#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <numeric>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dcg/errors.hpp"
#include "dcg/maxplus.hpp"
#include "dcg/rng.hpp"

namespace dcg::env {

// Predator-prey grid worlds:
//   pp-coop   prey need two simultaneous adjacent catchers; lone catch attempts
//             are punished with p.
//   pp-ghost  any single catcher succeeds, but each capture pays the current
//             fair coin (+1 or -1) which is only visible on the 3x3 cells at a
//             randomly chosen corner.

enum class Task { CoopCatch, GhostIndicator };

inline std::string_view task_name(Task t) { return t == Task::CoopCatch ? "pp-coop" : "pp-ghost"; }

inline Task parse_task(std::string_view s) {
  if (s == "pp-coop") return Task::CoopCatch;
  if (s == "pp-ghost") return Task::GhostIndicator;
  throw ArgumentError("unknown env '" + std::string(s) + "' (expected pp-coop or pp-ghost)");
}

enum Action : std::size_t { North = 0, South = 1, East = 2, West = 3, Stay = 4, Catch = 5 };
inline constexpr std::size_t kNumActions = 6;

struct Pos {
  int x = 0;  // column, grows east
  int y = 0;  // row, grows south
  friend bool operator==(const Pos&, const Pos&) = default;
};

inline constexpr std::array<Pos, 4> kMoves = {{{0, -1}, {0, 1}, {1, 0}, {-1, 0}}};

struct EnvConfig {
  Task task = Task::CoopCatch;
  int grid_w = 10;
  int grid_h = 10;
  std::size_t n_agents = 8;
  std::size_t n_prey = 8;
  double punishment = 0.0;  // p, coop task only
  std::size_t episode_limit = 200;
  int obs_window = 5;
  double catch_reward = 10.0;  // coop task; ghost captures pay the coin value

  void validate() const {
    if (grid_w < 1 || grid_h < 1) throw ConfigError("grid dimensions must be positive");
    if (obs_window < 1 || obs_window % 2 == 0) throw ConfigError("obs_window must be odd and positive");
    if (n_agents < 1) throw ConfigError("n_agents must be positive");
    if (n_agents + n_prey > static_cast<std::size_t>(grid_w) * static_cast<std::size_t>(grid_h))
      throw ConfigError("n_agents + n_prey exceeds the number of grid cells");
    if (episode_limit < 1) throw ConfigError("episode_limit must be at least 1");
    if (punishment > 0.0) throw ConfigError("punishment p must be <= 0");
    if (task == Task::GhostIndicator && (grid_w < 3 || grid_h < 3))
      throw ConfigError("ghost task needs a grid of at least 3x3");
  }

  std::size_t obs_dim() const {
    const auto w = static_cast<std::size_t>(obs_window);
    return 2 * w * w + (task == Task::GhostIndicator ? 1 : 0);
  }

  std::size_t state_dim() const {
    const auto cells = static_cast<std::size_t>(grid_w) * static_cast<std::size_t>(grid_h);
    return 2 * cells + (task == Task::GhostIndicator ? 5 : 0);
  }
};

struct EnvState {
  std::vector<Pos> agents;
  std::vector<bool> agent_alive;
  std::vector<Pos> prey;
  std::vector<bool> prey_alive;
  std::size_t t = 0;
  int indicator_corner = 0;  // 0 NW, 1 NE, 2 SW, 3 SE
  double coin = 1.0;

  std::size_t alive_agents() const { return static_cast<std::size_t>(std::count(agent_alive.begin(), agent_alive.end(), true)); }
  std::size_t alive_prey() const { return static_cast<std::size_t>(std::count(prey_alive.begin(), prey_alive.end(), true)); }

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

using Observation = std::vector<double>;

struct StepResult {
  std::vector<Observation> obs;
  double reward = 0.0;
  bool terminal = false;
  bool truncated = false;
  AvailMask avail;
};

namespace detail {

// Cell occupancy of alive entities: -1 empty, agents 0..n-1, prey n.. .
inline std::vector<int> occupancy(const EnvConfig& cfg, const EnvState& s) {
  std::vector<int> occ(static_cast<std::size_t>(cfg.grid_w * cfg.grid_h), -1);
  for (std::size_t i = 0; i < s.agents.size(); ++i)
    if (s.agent_alive[i]) occ[static_cast<std::size_t>(s.agents[i].y * cfg.grid_w + s.agents[i].x)] = static_cast<int>(i);
  for (std::size_t p = 0; p < s.prey.size(); ++p)
    if (s.prey_alive[p])
      occ[static_cast<std::size_t>(s.prey[p].y * cfg.grid_w + s.prey[p].x)] = static_cast<int>(s.agents.size() + p);
  return occ;
}

inline bool inside(const EnvConfig& cfg, Pos p) { return p.x >= 0 && p.y >= 0 && p.x < cfg.grid_w && p.y < cfg.grid_h; }

inline bool adjacent(Pos a, Pos b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y) == 1; }

inline Pos corner_cell(const EnvConfig& cfg, int corner) {
  return {(corner & 1) ? cfg.grid_w - 1 : 0, (corner & 2) ? cfg.grid_h - 1 : 0};
}

}  // namespace detail

// True on the nine cells of the 3x3 block in the indicator's corner.
inline bool sees_indicator(const EnvConfig& cfg, const EnvState& s, Pos p) {
  const Pos c = detail::corner_cell(cfg, s.indicator_corner);
  return std::abs(p.x - c.x) <= 2 && std::abs(p.y - c.y) <= 2;
}

/// Movement needs an in-grid, unoccupied target; catch needs an alive prey in
/// the 4-neighbourhood; stay is always possible. Dead agents may only stay.
inline std::vector<bool> available_actions(const EnvConfig& cfg, const EnvState& s, std::size_t i) {
  std::vector<bool> mask(kNumActions, false);
  mask[Stay] = true;
  if (!s.agent_alive[i]) return mask;
  const auto occ = detail::occupancy(cfg, s);
  const Pos me = s.agents[i];
  for (std::size_t m = 0; m < kMoves.size(); ++m) {
    const Pos tgt{me.x + kMoves[m].x, me.y + kMoves[m].y};
    mask[m] = detail::inside(cfg, tgt) && occ[static_cast<std::size_t>(tgt.y * cfg.grid_w + tgt.x)] < 0;
  }
  for (std::size_t p = 0; p < s.prey.size(); ++p)
    if (s.prey_alive[p] && detail::adjacent(me, s.prey[p])) mask[Catch] = true;
  return mask;
}

/// obs_window x obs_window x {agents, prey} occupancy centered on agent i,
/// channel-major, zero outside the grid; the ghost task appends the coin value
/// when standing on an indicator cell. Dead agents observe all zeros.
inline Observation observe(const EnvConfig& cfg, const EnvState& s, std::size_t i) {
  const int w = cfg.obs_window;
  const int r = w / 2;
  Observation o(cfg.obs_dim(), 0.0);
  if (!s.agent_alive[i]) return o;
  const Pos me = s.agents[i];
  auto mark = [&](int channel, Pos p) {
    const int dx = p.x - me.x, dy = p.y - me.y;
    if (std::abs(dx) > r || std::abs(dy) > r) return;
    o[static_cast<std::size_t>(channel * w * w + (dy + r) * w + (dx + r))] = 1.0;
  };
  for (std::size_t j = 0; j < s.agents.size(); ++j)
    if (s.agent_alive[j]) mark(0, s.agents[j]);
  for (std::size_t p = 0; p < s.prey.size(); ++p)
    if (s.prey_alive[p]) mark(1, s.prey[p]);
  if (cfg.task == Task::GhostIndicator && sees_indicator(cfg, s, me)) o.back() = s.coin;
  return o;
}

// Flattened global state: agent and prey occupancy planes, plus for the ghost
// task the one-hot indicator corner and the coin.
inline std::vector<double> global_state(const EnvConfig& cfg, const EnvState& s) {
  std::vector<double> g(cfg.state_dim(), 0.0);
  const auto cells = static_cast<std::size_t>(cfg.grid_w * cfg.grid_h);
  for (std::size_t i = 0; i < s.agents.size(); ++i)
    if (s.agent_alive[i]) g[static_cast<std::size_t>(s.agents[i].y * cfg.grid_w + s.agents[i].x)] = 1.0;
  for (std::size_t p = 0; p < s.prey.size(); ++p)
    if (s.prey_alive[p]) g[cells + static_cast<std::size_t>(s.prey[p].y * cfg.grid_w + s.prey[p].x)] = 1.0;
  if (cfg.task == Task::GhostIndicator) {
    g[2 * cells + static_cast<std::size_t>(s.indicator_corner)] = 1.0;
    g[2 * cells + 4] = s.coin;
  }
  return g;
}

inline StepResult make_result(const EnvConfig& cfg, const EnvState& s) {
  StepResult r;
  for (std::size_t i = 0; i < cfg.n_agents; ++i) {
    r.obs.push_back(observe(cfg, s, i));
    r.avail.push_back(available_actions(cfg, s, i));
  }
  return r;
}

/// Places all entities uniformly on distinct cells; the ghost task also draws
/// the indicator corner and the first coin.
inline std::pair<EnvState, StepResult> reset(const EnvConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t cells = static_cast<std::size_t>(cfg.grid_w * cfg.grid_h);
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates: the first n_agents + n_prey cells are the placement.
  const std::size_t need = cfg.n_agents + cfg.n_prey;
  for (std::size_t k = 0; k < need; ++k) std::swap(order[k], order[k + rng.uniform_int(cells - k)]);
  EnvState s;
  auto to_pos = [&](std::size_t c) { return Pos{static_cast<int>(c % static_cast<std::size_t>(cfg.grid_w)), static_cast<int>(c / static_cast<std::size_t>(cfg.grid_w))}; };
  for (std::size_t i = 0; i < cfg.n_agents; ++i) s.agents.push_back(to_pos(order[i]));
  for (std::size_t p = 0; p < cfg.n_prey; ++p) s.prey.push_back(to_pos(order[cfg.n_agents + p]));
  s.agent_alive.assign(cfg.n_agents, true);
  s.prey_alive.assign(cfg.n_prey, true);
  if (cfg.task == Task::GhostIndicator) {
    s.indicator_corner = static_cast<int>(rng.uniform_int(4));
    s.coin = rng.bernoulli(0.5) ? 1.0 : -1.0;
  }
  StepResult r = make_result(cfg, s);
  return {std::move(s), std::move(r)};
}

/// Advances one timestep: catches resolve first, then agents move in a random
/// order (a move into a cell taken meanwhile becomes stay), then prey move in
/// a random order, then the ghost coin is re-flipped.
inline StepResult step(const EnvConfig& cfg, EnvState& s, const JointAction& actions, Rng& rng) {
  if (actions.size() != cfg.n_agents) throw ContractError("step: expected one action per agent");
  for (std::size_t i = 0; i < cfg.n_agents; ++i) {
    if (actions[i] >= kNumActions || !available_actions(cfg, s, i)[actions[i]])
      throw ContractError("step: agent " + std::to_string(i) + " submitted unavailable action " + std::to_string(actions[i]));
  }
  double reward = 0.0;

  // (1) catches
  std::vector<bool> consumed(cfg.n_agents, false);
  for (std::size_t p = 0; p < s.prey.size(); ++p) {
    if (!s.prey_alive[p]) continue;
    std::vector<std::size_t> catchers;
    for (std::size_t i = 0; i < cfg.n_agents; ++i)
      if (s.agent_alive[i] && !consumed[i] && actions[i] == Catch && detail::adjacent(s.agents[i], s.prey[p]))
        catchers.push_back(i);
    const std::size_t needed = cfg.task == Task::CoopCatch ? 2 : 1;
    if (catchers.size() < needed) continue;
    s.prey_alive[p] = false;
    for (std::size_t k = 0; k < needed; ++k) consumed[catchers[k]] = true;
    reward += cfg.task == Task::CoopCatch ? cfg.catch_reward : s.coin;
  }
  for (std::size_t i = 0; i < cfg.n_agents; ++i) {
    if (consumed[i]) {
      s.agent_alive[i] = false;
    } else if (cfg.task == Task::CoopCatch && s.agent_alive[i] && actions[i] == Catch) {
      reward += cfg.punishment;
    }
  }

  // (2) agent movement
  auto occ = detail::occupancy(cfg, s);
  auto cell = [&](Pos p) -> int& { return occ[static_cast<std::size_t>(p.y * cfg.grid_w + p.x)]; };
  std::vector<std::size_t> movers;
  for (std::size_t i = 0; i < cfg.n_agents; ++i) movers.push_back(i);
  rng.shuffle(movers);
  for (std::size_t i : movers) {
    if (!s.agent_alive[i] || actions[i] >= kMoves.size()) continue;
    const Pos tgt{s.agents[i].x + kMoves[actions[i]].x, s.agents[i].y + kMoves[actions[i]].y};
    if (!detail::inside(cfg, tgt) || cell(tgt) >= 0) continue;
    cell(s.agents[i]) = -1;
    cell(tgt) = static_cast<int>(i);
    s.agents[i] = tgt;
  }

  // (3) prey movement
  std::vector<std::size_t> prey_order;
  for (std::size_t p = 0; p < s.prey.size(); ++p) prey_order.push_back(p);
  rng.shuffle(prey_order);
  for (std::size_t p : prey_order) {
    if (!s.prey_alive[p]) continue;
    std::vector<Pos> free;
    for (const Pos& m : kMoves) {
      const Pos tgt{s.prey[p].x + m.x, s.prey[p].y + m.y};
      if (detail::inside(cfg, tgt) && cell(tgt) < 0) free.push_back(tgt);
    }
    if (free.empty()) continue;
    const Pos tgt = free[rng.uniform_int(free.size())];
    cell(s.prey[p]) = -1;
    cell(tgt) = static_cast<int>(cfg.n_agents + p);
    s.prey[p] = tgt;
  }

  // (4) coin
  if (cfg.task == Task::GhostIndicator) s.coin = rng.bernoulli(0.5) ? 1.0 : -1.0;

  // (5) time
  s.t += 1;
  StepResult r = make_result(cfg, s);
  r.reward = reward;
  r.terminal = s.alive_agents() == 0 || s.alive_prey() == 0;
  r.truncated = !r.terminal && s.t >= cfg.episode_limit;
  return r;
}

/// Owns a config and the current state.
class PredatorPrey {
 public:
  explicit PredatorPrey(EnvConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  StepResult reset(Rng& rng) {
    auto [s, r] = env::reset(cfg_, rng);
    state_ = std::move(s);
    return r;
  }
  StepResult step(const JointAction& a, Rng& rng) { return env::step(cfg_, state_, a, rng); }

  const EnvConfig& config() const { return cfg_; }
  const EnvState& state() const { return state_; }
  EnvState& mutable_state() { return state_; }
  std::vector<double> global_state() const { return env::global_state(cfg_, state_); }

 private:
  EnvConfig cfg_;
  EnvState state_;
};

}  // namespace dcg::env
