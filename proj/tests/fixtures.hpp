#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "dcg/models.hpp"
#include "dcg/trainer.hpp"
#include "test_util.hpp"

namespace dcg::testing {

// Small model over synthetic observations (n agents, A actions).
inline models::ModelConfig small_model(models::Algo algo, std::size_t n = 3, std::size_t A = 4, std::size_t rank = 0, bool share = true,
                                       Topology topo = Topology::Full) {
  models::ModelConfig cfg;
  cfg.algo = algo;
  cfg.n_agents = n;
  cfg.n_actions = A;
  cfg.obs_dim = 5;
  cfg.state_dim = 7;
  cfg.hidden = 16;
  cfg.rank = rank;
  cfg.lrq_factors = 3;
  cfg.share = share;
  cfg.graph = build_topology(topo, n);
  return cfg;
}

// Episode of length T with random observations, masks, actions and rewards.
inline train::Episode synthetic_episode(const models::ModelConfig& cfg, std::size_t T, bool terminal, Rng& rng, double reward_scale = 2.0,
                                        double state_scale = 1.0) {
  train::Episode ep;
  ep.n_agents = cfg.n_agents;
  ep.n_actions = cfg.n_actions;
  ep.obs_dim = cfg.obs_dim;
  ep.state_dim = cfg.state_dim;
  ep.length = T;
  ep.terminal = terminal;
  ep.truncated = !terminal;
  for (std::size_t t = 0; t <= T; ++t) {
    std::vector<std::vector<bool>> avail(cfg.n_agents, std::vector<bool>(cfg.n_actions));
    for (std::size_t i = 0; i < cfg.n_agents; ++i) {
      for (std::size_t k = 0; k < cfg.obs_dim; ++k) ep.obs.push_back(static_cast<float>(rng.uniform(-1, 1)));
      for (std::size_t a = 0; a < cfg.n_actions; ++a) avail[i][a] = rng.bernoulli(0.7);
      avail[i][rng.uniform_int(cfg.n_actions)] = true;
      for (std::size_t a = 0; a < cfg.n_actions; ++a) ep.avail.push_back(avail[i][a] ? 1 : 0);
    }
    for (std::size_t k = 0; k < cfg.state_dim; ++k) ep.states.push_back(static_cast<float>(rng.uniform(-state_scale, state_scale)));
    if (t < T) {
      for (std::size_t i = 0; i < cfg.n_agents; ++i) {
        std::size_t a;
        do a = rng.uniform_int(cfg.n_actions);
        while (!avail[i][a]);
        ep.actions.push_back(static_cast<std::uint16_t>(a));
      }
      ep.rewards.push_back(rng.uniform(-reward_scale, reward_scale));
    }
  }
  return ep;
}

inline std::vector<const train::Episode*> pointers(const std::vector<train::Episode>& eps) {
  std::vector<const train::Episode*> p;
  for (const auto& e : eps) p.push_back(&e);
  return p;
}

// The full DQN loss of a batch as a function of the online parameters, with
// targets frozen from a separate target parameter set.
struct ComposedLoss {
  models::ModelConfig cfg;
  std::vector<train::Episode> episodes;
  std::vector<std::vector<double>> targets;

  ComposedLoss(models::ModelConfig c, std::vector<train::Episode> eps, const ng::ParamStore& online, const ng::ParamStore& target, Rng& rng)
      : cfg(std::move(c)), episodes(std::move(eps)) {
    const train::Batch batch(pointers(episodes));
    ng::Tape t1(false), t2(false);
    auto on = train::unroll(t1, cfg, online, batch);
    auto tg = train::unroll(t2, cfg, target, batch);
    targets = train::td_targets(cfg, 0.99, batch, on, tg, rng);
  }

  ng::Var operator()(ng::Tape& tape, const ng::ParamStore& ps) const {
    const train::Batch batch(pointers(episodes));
    return train::dqn_loss(cfg, batch, train::unroll(tape, cfg, ps, batch), targets);
  }
};

// Smallest |pre-activation| over every first-layer ReLU (encoder and state
// bias) in a forward pass over `episodes`. These ReLUs see raw inputs with
// |x| <= 1, so moving one fc weight or bias by h moves each of them by at most
// h; a margin above h means a central difference never straddles a kink.
inline double relu_margin(const models::ModelConfig& cfg, const ng::ParamStore& ps, const std::vector<train::Episode>& episodes) {
  double margin = std::numeric_limits<double>::infinity();
  auto scan = [&](const ng::Tensor& x, const ng::Tensor& W, const ng::Tensor& b) {
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < W.cols(); ++c) {
        double z = b[c];
        for (std::size_t k = 0; k < x.cols(); ++k) z += x.at(r, k) * W.at(k, c);
        margin = std::min(margin, std::abs(z));
      }
  };
  for (const auto& ep : episodes)
    for (std::size_t t = 0; t <= ep.length; ++t) {
      for (std::size_t i = 0; i < cfg.n_agents; ++i) {
        ng::Tensor row({1, cfg.input_dim()});
        std::optional<std::size_t> prev;
        if (t > 0) prev = ep.action_at(t - 1)[i];
        models::write_input_row(cfg, row.row_ptr(0), ep.obs_at(t, i), prev, i);
        const std::string p = cfg.agent_prefix(i);
        scan(row, ps.value(p + "encoder.fc.W"), ps.value(p + "encoder.fc.b"));
      }
      if (cfg.algo == models::Algo::DcgS) {
        ng::Tensor s({1, cfg.state_dim});
        for (std::size_t k = 0; k < cfg.state_dim; ++k) s[k] = ep.state_at(t)[k];
        scan(s, ps.value("state_bias.fc1.W"), ps.value("state_bias.fc1.b"));
      }
    }
  return margin;
}

// Online/target parameters and two episodes (one terminal, one truncated) for
// a finite-difference check of the composed loss. Draws are repeated from the
// seed's stream until every first-layer ReLU sits at least `margin` from its
// kink. Small rewards keep the TD residuals, and with them the round-off in
// the difference quotient, well below the smallest gradients checked.
struct FdInstance {
  ng::ParamStore online;
  std::unique_ptr<ComposedLoss> loss;
  int redraws = 0;
};

inline FdInstance fd_instance(const models::ModelConfig& cfg, std::uint64_t seed, double margin = 2e-5, double reward_scale = 0.05,
                              double state_scale = 0.25) {
  Rng rng(seed);
  FdInstance inst;
  for (;; ++inst.redraws) {
    inst.online = models::init_params(cfg, rng);
    const ng::ParamStore target = models::init_params(cfg, rng);
    std::vector<train::Episode> eps{synthetic_episode(cfg, 3, true, rng, reward_scale, state_scale),
                                     synthetic_episode(cfg, 2, false, rng, reward_scale, state_scale)};
    if (relu_margin(cfg, inst.online, eps) < margin) continue;
    inst.loss = std::make_unique<ComposedLoss>(cfg, std::move(eps), inst.online, target, rng);
    return inst;
  }
}

}  // namespace dcg::testing
