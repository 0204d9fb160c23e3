#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dcg/env.hpp"
#include "dcg/errors.hpp"
#include "dcg/models.hpp"
#include "dcg/numgrad.hpp"
#include "dcg/rng.hpp"

namespace dcg::train {

using models::ModelConfig;
using ng::ParamStore;
using ng::Tensor;
using ng::Var;

struct TrainConfig {
  double gamma = 0.99;
  double eps_start = 1.0;
  double eps_end = 0.05;
  std::size_t eps_anneal_steps = 50000;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 500;
  std::size_t target_update_episodes = 200;
  std::size_t eval_interval_steps = 2000;
  std::size_t eval_episodes = 20;
  std::size_t total_env_steps = 1'000'000;
  ng::RmsPropConfig rmsprop;
  double clip_norm = 10.0;

  void validate() const {
    if (!(0.0 <= eps_end && eps_end <= eps_start && eps_start <= 1.0))
      throw ConfigError("epsilon schedule needs 0 <= eps_end <= eps_start <= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (buffer_capacity < batch_size) throw ConfigError("buffer_capacity must hold at least one batch");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (target_update_episodes == 0) throw ConfigError("target_update_episodes must be positive");
    if (eval_interval_steps == 0) throw ConfigError("eval_interval_steps must be positive");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
    if (!(rmsprop.lr > 0.0) || !(rmsprop.alpha >= 0.0 && rmsprop.alpha < 1.0) || !(rmsprop.eps > 0.0))
      throw ConfigError("invalid RMSprop settings");
  }
};

/// Linear decay from eps_start to eps_end over eps_anneal_steps, then flat.
inline double epsilon_at(std::size_t t, const TrainConfig& cfg) {
  if (cfg.eps_anneal_steps == 0 || t >= cfg.eps_anneal_steps) return cfg.eps_end;
  const double frac = static_cast<double>(t) / static_cast<double>(cfg.eps_anneal_steps);
  return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start);
}

/// One complete episode. Observations, masks and global states are stored
/// for steps 0..T so that truncated episodes can bootstrap from step T.
struct Episode {
  std::size_t n_agents = 0, n_actions = 0, obs_dim = 0, state_dim = 0;
  std::size_t length = 0;            // T
  std::vector<float> obs;            // [(T+1) x n x obs_dim]
  std::vector<std::uint8_t> avail;   // [(T+1) x n x A]
  std::vector<float> states;         // [(T+1) x state_dim]
  std::vector<std::uint16_t> actions;  // [T x n]
  std::vector<double> rewards;       // [T]
  bool terminal = false;
  bool truncated = false;

  const float* obs_at(std::size_t t, std::size_t i) const { return &obs[(t * n_agents + i) * obs_dim]; }
  const float* state_at(std::size_t t) const { return &states[t * state_dim]; }
  AvailMask avail_at(std::size_t t) const {
    AvailMask m(n_agents, std::vector<bool>(n_actions));
    for (std::size_t i = 0; i < n_agents; ++i)
      for (std::size_t a = 0; a < n_actions; ++a) m[i][a] = avail[(t * n_agents + i) * n_actions + a] != 0;
    return m;
  }
  JointAction action_at(std::size_t t) const {
    JointAction a(n_agents);
    for (std::size_t i = 0; i < n_agents; ++i) a[i] = actions[t * n_agents + i];
    return a;
  }
  double total_return() const {
    double r = 0.0;
    for (double x : rewards) r += x;
    return r;
  }

  friend bool operator==(const Episode&, const Episode&) = default;
};

/// FIFO of the most recent episodes.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 500) : capacity_(capacity) {
    if (capacity == 0) throw ArgumentError("replay buffer capacity must be positive");
  }

  void push(Episode ep) {
    if (episodes_.size() == capacity_) episodes_.pop_front();
    episodes_.push_back(std::move(ep));
  }

  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Episode& operator[](std::size_t i) const { return episodes_[i]; }
  const Episode& newest() const { return episodes_.back(); }
  const std::deque<Episode>& episodes() const { return episodes_; }

  /// Indices of the newest episode followed by batch-1 distinct uniform draws
  /// from the rest.
  std::vector<std::size_t> sample(std::size_t batch, Rng& rng) const {
    if (batch == 0 || batch > episodes_.size())
      throw ArgumentError("cannot sample " + std::to_string(batch) + " episodes from a buffer of " + std::to_string(episodes_.size()));
    const std::size_t newest_idx = episodes_.size() - 1;
    std::vector<std::size_t> pool(newest_idx);
    for (std::size_t i = 0; i < newest_idx; ++i) pool[i] = i;
    std::vector<std::size_t> out{newest_idx};
    for (std::size_t k = 0; k + 1 < batch; ++k) {
      const std::size_t j = k + rng.uniform_int(pool.size() - k);
      std::swap(pool[k], pool[j]);
      out.push_back(pool[k]);
    }
    return out;
  }

  friend bool operator==(const ReplayBuffer&, const ReplayBuffer&) = default;

 private:
  std::size_t capacity_;
  std::deque<Episode> episodes_;
};

namespace detail {

inline std::vector<std::vector<float>> to_float(const std::vector<env::Observation>& obs) {
  std::vector<std::vector<float>> out(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) out[i].assign(obs[i].begin(), obs[i].end());
  return out;
}

inline void append_step(Episode& ep, const std::vector<env::Observation>& obs, const AvailMask& avail, const std::vector<double>& state) {
  for (const auto& o : obs)
    for (double x : o) ep.obs.push_back(static_cast<float>(x));
  for (const auto& m : avail)
    for (bool b : m) ep.avail.push_back(b ? 1 : 0);
  for (double x : state) ep.states.push_back(static_cast<float>(x));
}

}  // namespace detail

/// Rolls out one episode with per-agent epsilon-greedy actions. The env
/// stream drives resets and dynamics; the explore stream drives exploration.
inline Episode collect_episode(const ModelConfig& mcfg, const ParamStore& ps, env::PredatorPrey& env, double epsilon, Rng& env_rng,
                               Rng& explore_rng) {
  const auto& ecfg = env.config();
  Episode ep;
  ep.n_agents = ecfg.n_agents;
  ep.n_actions = env::kNumActions;
  ep.obs_dim = ecfg.obs_dim();
  ep.state_dim = ecfg.state_dim();
  if (mcfg.n_agents != ep.n_agents || mcfg.n_actions != ep.n_actions || mcfg.obs_dim != ep.obs_dim)
    throw DimensionError("collect_episode: model and environment dimensions disagree");

  env::StepResult r = env.reset(env_rng);
  models::HiddenStates hs(mcfg);
  detail::append_step(ep, r.obs, r.avail, env.global_state());
  while (true) {
    models::HeadOutputs out = models::observe_step(mcfg, ps, hs, detail::to_float(r.obs));
    JointAction a = models::select_actions(mcfg, out, r.avail, epsilon, explore_rng);
    r = env.step(a, env_rng);
    hs.prev_action = a;
    for (std::size_t x : a) ep.actions.push_back(static_cast<std::uint16_t>(x));
    ep.rewards.push_back(r.reward);
    ++ep.length;
    detail::append_step(ep, r.obs, r.avail, env.global_state());
    if (r.terminal || r.truncated) {
      ep.terminal = r.terminal;
      ep.truncated = r.truncated;
      break;
    }
  }
  return ep;
}

// ---------------------------------------------------------------------------
// Batched unrolling over whole episodes.

/// Episodes sorted by length (longest first, stable). At step t the first
/// active(t) episodes, those with length >= t, are processed; shorter ones
/// are simply absent, which is equivalent to masking their padding.
struct Batch {
  std::vector<const Episode*> episodes;

  explicit Batch(std::vector<const Episode*> eps) : episodes(std::move(eps)) {
    if (episodes.empty()) throw ArgumentError("empty batch");
    std::stable_sort(episodes.begin(), episodes.end(), [](const Episode* a, const Episode* b) { return a->length > b->length; });
  }

  std::size_t size() const { return episodes.size(); }
  std::size_t max_length() const { return episodes.front()->length; }
  // Episodes that still have an observation at step t (length >= t).
  std::size_t observed(std::size_t t) const {
    std::size_t c = 0;
    while (c < episodes.size() && episodes[c]->length >= t) ++c;
    return c;
  }
  // Episodes that take an action at step t (length > t).
  std::size_t acting(std::size_t t) const {
    std::size_t c = 0;
    while (c < episodes.size() && episodes[c]->length > t) ++c;
    return c;
  }
};

/// Head outputs for every step 0..max_length, step t holding observed(t) samples.
inline std::vector<models::HeadOutputs> unroll(ng::Tape& tape, const ModelConfig& cfg, const ParamStore& ps, const Batch& batch) {
  const std::size_t n = cfg.n_agents, H = cfg.hidden;
  std::vector<models::HeadOutputs> steps;
  Var h;
  std::size_t prev_S = 0;
  for (std::size_t t = 0; t <= batch.max_length(); ++t) {
    const std::size_t S = batch.observed(t);
    if (t == 0) {
      h = tape.constant(Tensor({n * S, H}));
    } else if (S != prev_S) {
      std::vector<std::size_t> keep(n * S);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t s = 0; s < S; ++s) keep[i * S + s] = i * prev_S + s;
      h = ng::gather_rows(h, std::move(keep));
    }
    Tensor in({n * S, cfg.input_dim()});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t s = 0; s < S; ++s) {
        const Episode& ep = *batch.episodes[s];
        std::optional<std::size_t> prev;
        if (t > 0) prev = ep.actions[(t - 1) * n + i];
        models::write_input_row(cfg, in.row_ptr(i * S + s), ep.obs_at(t, i), prev, i);
      }
    h = models::encode_step(tape, cfg, ps, h, in, S);
    std::optional<Tensor> states;
    if (cfg.algo == models::Algo::DcgS) {
      states = Tensor({S, cfg.state_dim});
      for (std::size_t s = 0; s < S; ++s) {
        const float* st = batch.episodes[s]->state_at(t);
        for (std::size_t k = 0; k < cfg.state_dim; ++k) states->at(s, k) = st[k];
      }
    }
    steps.push_back(models::heads(tape, cfg, ps, h, S, states ? &*states : nullptr));
    prev_S = S;
  }
  return steps;
}

/// Per-step regression targets; targets[t] holds one value per acting
/// episode (per agent and acting episode, agent-major, for iql).
/// y_t = r_t + gamma * Q_target(tau_{t+1}, a*_{t+1}) with a* greedy under the
/// online network; the bootstrap is dropped after a true terminal.
inline std::vector<std::vector<double>> td_targets(const ModelConfig& cfg, double gamma, const Batch& batch,
                                                   const std::vector<models::HeadOutputs>& online,
                                                   const std::vector<models::HeadOutputs>& target, Rng& rng) {
  const std::size_t n = cfg.n_agents;
  const bool per_agent = cfg.algo == models::Algo::Iql;
  std::vector<std::vector<double>> y(batch.max_length());
  for (std::size_t t = 0; t < batch.max_length(); ++t) {
    const std::size_t S = batch.acting(t);
    y[t].assign(per_agent ? n * S : S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      const Episode& ep = *batch.episodes[s];
      const double r = ep.rewards[t];
      const bool last = t + 1 == ep.length;
      std::vector<double> boot(per_agent ? n : 1, 0.0);
      if (!(last && ep.terminal) && gamma != 0.0) {
        const AvailMask avail = ep.avail_at(t + 1);
        const JointAction a_star = models::greedy_action(cfg, online[t + 1], s, avail, rng);
        boot = models::action_values(cfg, target[t + 1], s, avail, a_star);
      }
      if (per_agent) {
        for (std::size_t i = 0; i < n; ++i) y[t][i * S + s] = r + gamma * boot[i];
      } else {
        y[t][s] = r + gamma * boot[0];
      }
    }
  }
  return y;
}

/// Mean over episodes of (1/T_ep) sum_t (y_t - q(a_t))^2; for iql the squared
/// errors are also averaged over agents.
inline Var dqn_loss(const ModelConfig& cfg, const Batch& batch, const std::vector<models::HeadOutputs>& online,
                    const std::vector<std::vector<double>>& targets) {
  if (targets.size() != batch.max_length()) throw DimensionError("dqn_loss: one target row per step required");
  const std::size_t n = cfg.n_agents;
  const bool per_agent = cfg.algo == models::Algo::Iql;
  const double B = static_cast<double>(batch.size());
  Var total;
  for (std::size_t t = 0; t < batch.max_length(); ++t) {
    const models::HeadOutputs& out = online[t];
    const std::size_t S_obs = out.samples;
    const std::size_t S = batch.acting(t);
    // Episodes that end at t get a placeholder action and zero weight.
    std::vector<JointAction> actions(S_obs, JointAction(n, 0));
    for (std::size_t s = 0; s < S; ++s) actions[s] = batch.episodes[s]->action_at(t);
    Var q = models::executed_q(cfg, out, actions);
    const std::size_t rows = per_agent ? n * S_obs : S_obs;
    Tensor y({rows, 1}), w({rows, 1});
    for (std::size_t s = 0; s < S; ++s) {
      const double weight = 1.0 / (B * static_cast<double>(batch.episodes[s]->length) * (per_agent ? static_cast<double>(n) : 1.0));
      if (per_agent) {
        for (std::size_t i = 0; i < n; ++i) {
          y[i * S_obs + s] = targets[t][i * S + s];
          w[i * S_obs + s] = weight;
        }
      } else {
        y[s] = targets[t][s];
        w[s] = weight;
      }
    }
    Var d = ng::sub(q, q->tape->constant(std::move(y)));
    Var term = ng::weighted_sum(ng::mul(d, d), std::move(w));
    total = total ? ng::add(total, term) : term;
  }
  if (!std::isfinite(total->value[0])) throw NumericError("dqn_loss: non-finite loss");
  return total;
}

// ---------------------------------------------------------------------------
// Training state and loop.

struct TrainerState {
  ModelConfig model;
  TrainConfig config;
  env::EnvConfig env_config;
  std::uint64_t seed = 0;
  ParamStore online;
  ParamStore target;
  ng::OptimState optim;
  ReplayBuffer buffer;
  Rng env_rng;
  Rng explore_rng;
  std::size_t t_env = 0;
  std::size_t episodes = 0;
  std::size_t gradient_steps = 0;
  std::size_t target_updates = 0;
  double last_loss = std::numeric_limits<double>::quiet_NaN();
};

/// Fresh state: parameters from the init stream, target = online.
inline TrainerState make_trainer(const ModelConfig& mcfg, const TrainConfig& tcfg, const env::EnvConfig& ecfg, std::uint64_t seed) {
  mcfg.validate();
  tcfg.validate();
  ecfg.validate();
  Rng init_rng(derive_seed(seed, "init"));
  ParamStore ps = models::init_params(mcfg, init_rng);
  ng::OptimState optim(ps, tcfg.rmsprop);
  TrainerState st{mcfg, tcfg, ecfg, seed, ps, ps, std::move(optim), ReplayBuffer(tcfg.buffer_capacity),
                  Rng(derive_seed(seed, "env")), Rng(derive_seed(seed, "explore"))};
  return st;
}

/// Copies online into target whenever the episode counter sits on a multiple
/// of target_update_episodes. Returns whether a copy happened.
inline bool update_target(TrainerState& st) {
  if (st.episodes == 0 || st.episodes % st.config.target_update_episodes != 0) return false;
  st.target = st.online;
  ++st.target_updates;
  return true;
}

/// One gradient step on the given batch; returns the loss value.
inline double gradient_step(TrainerState& st, const Batch& batch) {
  ng::Tape tape;
  auto online = unroll(tape, st.model, st.online, batch);
  std::vector<models::HeadOutputs> target;
  {
    ng::Tape frozen(false);
    target = unroll(frozen, st.model, st.target, batch);
  }
  const auto y = td_targets(st.model, st.config.gamma, batch, online, target, st.explore_rng);
  Var loss = dqn_loss(st.model, batch, online, y);
  st.online.zero_grad();
  tape.backward(loss, st.online);
  ng::clip_global_norm(st.online, st.config.clip_norm);
  ng::rmsprop_step(st.online, st.optim);
  ++st.gradient_steps;
  return loss->value[0];
}

struct IterationResult {
  std::size_t episode_length = 0;
  double episode_return = 0.0;
  std::optional<double> loss;
};

/// Collects one episode, stores it, and takes one gradient step once the
/// buffer holds a full batch. The batch always contains the newest episode.
inline IterationResult train_iteration(TrainerState& st, env::PredatorPrey& env) {
  const double eps = epsilon_at(st.t_env, st.config);
  Episode ep = collect_episode(st.model, st.online, env, eps, st.env_rng, st.explore_rng);
  IterationResult res{ep.length, ep.total_return(), std::nullopt};
  st.t_env += ep.length;
  ++st.episodes;
  st.buffer.push(std::move(ep));
  if (st.buffer.size() >= st.config.batch_size) {
    std::vector<const Episode*> eps_ptr;
    for (std::size_t i : st.buffer.sample(st.config.batch_size, st.explore_rng)) eps_ptr.push_back(&st.buffer[i]);
    res.loss = gradient_step(st, Batch(std::move(eps_ptr)));
    st.last_loss = *res.loss;
  }
  update_target(st);
  return res;
}

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::vector<double> returns;
};

/// Greedy (epsilon = 0) test episodes on a fresh environment; touches no
/// training state.
inline EvalResult evaluate(const ModelConfig& mcfg, const ParamStore& ps, const env::EnvConfig& ecfg, std::size_t n_episodes, Rng& rng) {
  if (n_episodes == 0) throw ArgumentError("evaluate: need at least one episode");
  env::PredatorPrey env(ecfg);
  EvalResult res;
  for (std::size_t k = 0; k < n_episodes; ++k) res.returns.push_back(collect_episode(mcfg, ps, env, 0.0, rng, rng).total_return());
  for (double r : res.returns) res.mean += r;
  res.mean /= static_cast<double>(n_episodes);
  for (double r : res.returns) res.std += (r - res.mean) * (r - res.mean);
  res.std = std::sqrt(res.std / static_cast<double>(n_episodes));
  return res;
}

/// Independent stream for the k-th evaluation of a run.
inline Rng eval_rng(std::uint64_t seed, std::size_t eval_index) { return Rng(derive_seed(seed ^ mix64(eval_index + 1), "eval")); }

}  // namespace dcg::train
