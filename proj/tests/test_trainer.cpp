#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dcg/trainer.hpp"
#include "fixtures.hpp"

using namespace dcg;
using models::Algo;
using models::HeadOutputs;
using ng::Tensor;
using train::Batch;
using train::Episode;

namespace {

env::EnvConfig desk_env() {
  env::EnvConfig e;
  e.grid_w = 5;
  e.grid_h = 5;
  e.n_agents = 3;
  e.n_prey = 2;
  e.episode_limit = 20;
  e.punishment = -1;
  return e;
}

models::ModelConfig model_for(const env::EnvConfig& e, Algo algo, std::size_t hidden = 16) {
  models::ModelConfig m;
  m.algo = algo;
  m.n_agents = e.n_agents;
  m.n_actions = env::kNumActions;
  m.obs_dim = e.obs_dim();
  m.state_dim = e.state_dim();
  m.hidden = hidden;
  m.lrq_factors = 4;
  m.graph = build_topology(Topology::Full, e.n_agents);
  return m;
}

train::TrainConfig small_train(std::size_t batch = 4) {
  train::TrainConfig t;
  t.batch_size = batch;
  t.buffer_capacity = 50;
  t.eps_anneal_steps = 500;
  return t;
}

// Episode skeleton with hand-set rewards; observations and masks are
// irrelevant when head outputs are supplied directly.
Episode bare_episode(std::size_t n, std::size_t A, std::vector<double> rewards, std::vector<JointAction> actions, bool terminal) {
  Episode ep;
  ep.n_agents = n;
  ep.n_actions = A;
  ep.obs_dim = 1;
  ep.state_dim = 1;
  ep.length = rewards.size();
  ep.rewards = std::move(rewards);
  for (const auto& a : actions)
    for (auto x : a) ep.actions.push_back(static_cast<std::uint16_t>(x));
  ep.obs.assign((ep.length + 1) * n, 0.0f);
  ep.states.assign(ep.length + 1, 0.0f);
  ep.avail.assign((ep.length + 1) * n * A, 1);
  ep.terminal = terminal;
  ep.truncated = !terminal;
  return ep;
}

HeadOutputs utilities(ng::Tape& tape, Tensor u) {
  HeadOutputs out;
  out.samples = u.rows() == 0 ? 0 : 1;
  out.utility = tape.constant(std::move(u));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Exploration schedule

TEST(Epsilon, Examples) {
  const train::TrainConfig cfg;
  EXPECT_EQ(train::epsilon_at(0, cfg), 1.0);
  EXPECT_DOUBLE_EQ(train::epsilon_at(25000, cfg), 0.525);
  EXPECT_EQ(train::epsilon_at(50000, cfg), 0.05);
  EXPECT_EQ(train::epsilon_at(1'000'000, cfg), 0.05);
}

TEST(Epsilon, NonIncreasingAndBounded) {
  const train::TrainConfig cfg;
  double prev = 1.0;
  for (std::size_t t = 0; t <= 60000; t += 7) {
    const double e = train::epsilon_at(t, cfg);
    EXPECT_LE(e, prev);
    EXPECT_GE(e, 0.05);
    EXPECT_LE(e, 1.0);
    prev = e;
  }
}

TEST(TrainConfig, Validation) {
  train::TrainConfig c;
  c.eps_end = 0.5;
  c.eps_start = 0.4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.buffer_capacity = 10;
  EXPECT_THROW(c.validate(), ConfigError);
}

// ---------------------------------------------------------------------------
// Replay buffer

TEST(ReplayBuffer, EvictsOldestFirst) {
  train::ReplayBuffer buf(500);
  for (std::size_t k = 0; k < 520; ++k) {
    Episode ep;
    ep.length = k;
    buf.push(ep);
    EXPECT_LE(buf.size(), 500u);
  }
  EXPECT_EQ(buf.size(), 500u);
  for (std::size_t i = 0; i < 500; ++i) EXPECT_EQ(buf[i].length, 20 + i);
  EXPECT_EQ(buf.newest().length, 519u);
}

TEST(ReplayBuffer, SampleHasNewestAndDistinctIndices) {
  train::ReplayBuffer buf(100);
  for (std::size_t k = 0; k < 40; ++k) buf.push(Episode{});
  Rng rng(1);
  std::vector<int> hits(40, 0);
  for (int rep = 0; rep < 2000; ++rep) {
    const auto idx = buf.sample(32, rng);
    ASSERT_EQ(idx.size(), 32u);
    EXPECT_EQ(idx[0], 39u);
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 32u);
    for (auto i : idx) ++hits[i];
  }
  // Each older episode is drawn with probability 31/39.
  for (std::size_t i = 0; i < 39; ++i) EXPECT_NEAR(hits[i] / 2000.0, 31.0 / 39.0, 0.05);
  EXPECT_THROW(buf.sample(41, rng), ArgumentError);
  EXPECT_THROW(buf.sample(0, rng), ArgumentError);
  EXPECT_THROW(train::ReplayBuffer(0), ArgumentError);
}

// ---------------------------------------------------------------------------
// Collection

TEST(CollectEpisode, GreedyReplayIsDeterministic) {
  const auto e = desk_env();
  const auto m = model_for(e, Algo::Dcg);
  Rng init(2);
  const auto ps = models::init_params(m, init);
  auto run = [&] {
    env::PredatorPrey env(e);
    Rng env_rng(9), explore(10);
    return train::collect_episode(m, ps, env, 0.0, env_rng, explore);
  };
  EXPECT_EQ(run(), run());
}

TEST(CollectEpisode, RecordsConsistentEpisodes) {
  auto e = desk_env();
  e.episode_limit = 200;
  for (Algo algo : {Algo::Dcg, Algo::Vdn, Algo::Iql, Algo::Lrq}) {
    const auto m = model_for(e, algo);
    Rng init(3), env_rng(4), explore(5);
    const auto ps = models::init_params(m, init);
    env::PredatorPrey env(e);
    for (int k = 0; k < 5; ++k) {
      const auto ep = train::collect_episode(m, ps, env, 0.5, env_rng, explore);
      EXPECT_GE(ep.length, 1u);
      EXPECT_LE(ep.length, 200u);
      EXPECT_NE(ep.terminal, ep.truncated);
      EXPECT_EQ(ep.truncated, ep.length == 200);
      EXPECT_EQ(ep.obs.size(), (ep.length + 1) * e.n_agents * e.obs_dim());
      EXPECT_EQ(ep.states.size(), (ep.length + 1) * e.state_dim());
      EXPECT_EQ(ep.rewards.size(), ep.length);
      for (std::size_t t = 0; t < ep.length; ++t) {
        const auto avail = ep.avail_at(t);
        const auto a = ep.action_at(t);
        for (std::size_t i = 0; i < e.n_agents; ++i) EXPECT_TRUE(avail[i][a[i]]);
      }
    }
  }
}

TEST(CollectEpisode, DimensionMismatch) {
  const auto e = desk_env();
  auto m = model_for(e, Algo::Vdn);
  m.obs_dim += 1;
  Rng rng(1);
  const auto ps = models::init_params(m, rng);
  env::PredatorPrey env(e);
  EXPECT_THROW(train::collect_episode(m, ps, env, 0.0, rng, rng), DimensionError);
}

// ---------------------------------------------------------------------------
// Batching, targets and loss

TEST(Batch, SortsByLengthAndCountsActiveEpisodes) {
  const Episode a = bare_episode(1, 2, {0, 0}, {{0}, {0}}, true);
  const Episode b = bare_episode(1, 2, {0, 0, 0, 0}, {{0}, {0}, {0}, {0}}, true);
  const Episode c = bare_episode(1, 2, {0, 0}, {{1}, {1}}, false);
  const Batch batch({&a, &b, &c});
  EXPECT_EQ(batch.episodes[0], &b);
  EXPECT_EQ(batch.episodes[1], &a);
  EXPECT_EQ(batch.episodes[2], &c);
  EXPECT_EQ(batch.max_length(), 4u);
  EXPECT_EQ(batch.observed(2), 3u);
  EXPECT_EQ(batch.acting(2), 1u);
  EXPECT_EQ(batch.observed(3), 1u);
  EXPECT_THROW(Batch({}), ArgumentError);
}

TEST(TdTargets, TerminalStepDoesNotBootstrap) {
  auto m = dcg::testing::small_model(Algo::Vdn, 1, 2);
  const Episode ep = bare_episode(1, 2, {10}, {{1}}, true);
  const Batch batch({&ep});
  ng::Tape tape(false);
  std::vector<HeadOutputs> heads{utilities(tape, Tensor::matrix({{5, 7}})), utilities(tape, Tensor::matrix({{100, 200}}))};
  Rng rng(1);
  EXPECT_EQ(train::td_targets(m, 0.99, batch, heads, heads, rng), (std::vector<std::vector<double>>{{10.0}}));
}

TEST(TdTargets, ZeroDiscountGivesRewards) {
  const auto cfg = dcg::testing::small_model(Algo::Dcg);
  Rng rng(2);
  std::vector<Episode> eps{dcg::testing::synthetic_episode(cfg, 4, false, rng), dcg::testing::synthetic_episode(cfg, 2, true, rng)};
  const Batch batch(dcg::testing::pointers(eps));
  const auto ps = models::init_params(cfg, rng);
  ng::Tape tape(false);
  const auto heads = train::unroll(tape, cfg, ps, batch);
  const auto y = train::td_targets(cfg, 0.0, batch, heads, heads, rng);
  ASSERT_EQ(y.size(), 4u);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t s = 0; s < batch.acting(t); ++s) EXPECT_EQ(y[t][s], batch.episodes[s]->rewards[t]);
}

TEST(TdTargets, HandComputedTwoAgentVdn) {
  // Truncated 2-step episode; the online net picks a*, the target net values it.
  auto m = dcg::testing::small_model(Algo::Vdn, 2, 3);
  Episode ep = bare_episode(2, 3, {1.0, -0.5}, {{0, 1}, {2, 2}}, false);
  // At t = 1, agent 0 cannot take action 2 (its online favourite).
  ep.avail[(1 * 2 + 0) * 3 + 2] = 0;
  const Batch batch({&ep});
  ng::Tape tape(false);
  std::vector<HeadOutputs> online{utilities(tape, Tensor::matrix({{0, 0, 0}, {0, 0, 0}})),
                                  utilities(tape, Tensor::matrix({{1, 2, 9}, {3, 1, 0}})),
                                  utilities(tape, Tensor::matrix({{4, 1, 0}, {0, 0, 5}}))};
  std::vector<HeadOutputs> target{utilities(tape, Tensor::matrix({{0, 0, 0}, {0, 0, 0}})),
                                  utilities(tape, Tensor::matrix({{10, 20, 30}, {40, 50, 60}})),
                                  utilities(tape, Tensor::matrix({{-1, -2, -3}, {-4, -5, -6}}))};
  Rng rng(3);
  const auto y = train::td_targets(m, 0.5, batch, online, target, rng);
  // t=0: a* = (1, 0) -> 20 + 40; t=1: a* = (0, 2) -> -1 - 6.
  EXPECT_DOUBLE_EQ(y[0][0], 1.0 + 0.5 * 60.0);
  EXPECT_DOUBLE_EQ(y[1][0], -0.5 + 0.5 * -7.0);
}

TEST(TdTargets, HandComputedTwoAgentDcg) {
  auto m = dcg::testing::small_model(Algo::Dcg, 2, 2);
  const Episode ep = bare_episode(2, 2, {2.0}, {{0, 0}}, false);
  const Batch batch({&ep});
  ng::Tape tape(false);
  auto make = [&](Tensor u, std::vector<double> payoff) {
    HeadOutputs h = utilities(tape, std::move(u));
    h.payoff_ij = tape.constant(Tensor({1, 4}, payoff));
    h.payoff_ji = tape.constant(Tensor({1, 4}));
    return h;
  };
  // Online: utilities favour (0, 0) but the payoff makes (1, 1) best:
  // q(0,0) = (1+1)/2 + 0 = 1, q(1,1) = 0 + 8/2 = 4.
  std::vector<HeadOutputs> online{make(Tensor({2, 2}), {0, 0, 0, 0}), make(Tensor::matrix({{1, 0}, {1, 0}}), {0, 0, 0, 8})};
  // Target: q(1,1) = (3 + 5)/2 + (6 + 0)/2 = 7.
  std::vector<HeadOutputs> target{make(Tensor({2, 2}), {0, 0, 0, 0}), make(Tensor::matrix({{0, 3}, {0, 5}}), {0, 0, 0, 6})};
  Rng rng(4);
  const auto y = train::td_targets(m, 0.9, batch, online, target, rng);
  EXPECT_DOUBLE_EQ(y[0][0], 2.0 + 0.9 * 7.0);
}

TEST(DqnLoss, ZeroWhenTargetsEqualValues) {
  for (Algo algo : {Algo::Dcg, Algo::Vdn, Algo::Iql, Algo::Lrq}) {
    const auto cfg = dcg::testing::small_model(algo);
    Rng rng(5);
    std::vector<Episode> eps{dcg::testing::synthetic_episode(cfg, 3, true, rng), dcg::testing::synthetic_episode(cfg, 5, false, rng)};
    const Batch batch(dcg::testing::pointers(eps));
    const auto ps = models::init_params(cfg, rng);
    ng::Tape tape(false);
    const auto heads = train::unroll(tape, cfg, ps, batch);
    std::vector<std::vector<double>> y(batch.max_length());
    for (std::size_t t = 0; t < batch.max_length(); ++t) {
      const std::size_t S = batch.acting(t);
      std::vector<JointAction> acts;
      for (std::size_t s = 0; s < heads[t].samples; ++s) acts.push_back(s < S ? batch.episodes[s]->action_at(t) : JointAction(3, 0));
      const Tensor q = models::executed_q(cfg, heads[t], acts)->value;
      // Agent-major over acting samples for iql, one value per sample otherwise.
      const std::size_t per = algo == Algo::Iql ? 3 : 1;
      for (std::size_t i = 0; i < per; ++i)
        for (std::size_t s = 0; s < S; ++s) y[t].push_back(q[i * heads[t].samples + s]);
    }
    EXPECT_EQ(train::dqn_loss(cfg, batch, heads, y)->value[0], 0.0) << models::algo_name(algo);
  }
}

TEST(DqnLoss, SingleStepOffsetOfTwo) {
  auto m = dcg::testing::small_model(Algo::Vdn, 2, 3);
  const Episode ep = bare_episode(2, 3, {0.0}, {{1, 2}}, true);
  const Batch batch({&ep});
  ng::Tape tape(false);
  std::vector<HeadOutputs> heads{utilities(tape, Tensor::matrix({{0, 1.5, 0}, {0, 0, 2}})), utilities(tape, Tensor({2, 3}))};
  EXPECT_EQ(train::dqn_loss(m, batch, heads, {{5.5}})->value[0], 4.0);
}

TEST(DqnLoss, IqlAveragesAgents) {
  auto m = dcg::testing::small_model(Algo::Iql, 2, 3);
  const Episode ep = bare_episode(2, 3, {0.0}, {{1, 2}}, true);
  const Batch batch({&ep});
  ng::Tape tape(false);
  std::vector<HeadOutputs> heads{utilities(tape, Tensor::matrix({{0, 1, 0}, {0, 0, 2}})), utilities(tape, Tensor({2, 3}))};
  // Errors 3 and 1 -> (9 + 1) / 2.
  EXPECT_EQ(train::dqn_loss(m, batch, heads, {{4.0, 3.0}})->value[0], 5.0);
}

TEST(DqnLoss, PaddingMatchesSeparateEpisodes) {
  // Targets come from the joint batch and are sliced per episode, so only the
  // handling of the shorter episode's missing steps differs.
  for (Algo algo : {Algo::Dcg, Algo::DcgS, Algo::Vdn, Algo::Iql, Algo::Lrq}) {
    const auto cfg = dcg::testing::small_model(algo);
    const std::size_t n = cfg.n_agents;
    const std::size_t per = algo == Algo::Iql ? n : 1;
    Rng rng(6);
    std::vector<Episode> eps{dcg::testing::synthetic_episode(cfg, 2, true, rng), dcg::testing::synthetic_episode(cfg, 5, false, rng)};
    const auto online = models::init_params(cfg, rng);
    const auto target = models::init_params(cfg, rng);
    const Batch joint({&eps[0], &eps[1]});
    ng::Tape t1(false), t2(false);
    const auto on = train::unroll(t1, cfg, online, joint);
    const auto y = train::td_targets(cfg, 0.99, joint, on, train::unroll(t2, cfg, target, joint), rng);
    const double joint_loss = train::dqn_loss(cfg, joint, on, y)->value[0];

    double separate = 0.0;
    for (std::size_t s = 0; s < 2; ++s) {
      const Episode* ep = joint.episodes[s];
      const Batch single({ep});
      std::vector<std::vector<double>> ys(ep->length);
      for (std::size_t t = 0; t < ep->length; ++t)
        for (std::size_t i = 0; i < per; ++i) ys[t].push_back(y[t][i * joint.acting(t) + s]);
      ng::Tape t3(false);
      separate += 0.5 * train::dqn_loss(cfg, single, train::unroll(t3, cfg, online, single), ys)->value[0];
    }
    EXPECT_NEAR(joint_loss, separate, 1e-12 * std::max(1.0, separate)) << models::algo_name(algo);
  }
}

TEST(DqnLoss, NonFiniteIsRejected) {
  auto m = dcg::testing::small_model(Algo::Vdn, 1, 2);
  const Episode ep = bare_episode(1, 2, {0.0}, {{0}}, true);
  const Batch batch({&ep});
  ng::Tape tape(false);
  std::vector<HeadOutputs> heads{utilities(tape, Tensor::matrix({{std::nan(""), 0}})), utilities(tape, Tensor({1, 2}))};
  EXPECT_THROW(train::dqn_loss(m, batch, heads, {{0.0}}), NumericError);
  EXPECT_THROW(train::dqn_loss(m, batch, heads, {}), DimensionError);
}

// ---------------------------------------------------------------------------
// Training loop

TEST(TrainIteration, WaitsForAFullBatch) {
  const auto e = desk_env();
  auto st = train::make_trainer(model_for(e, Algo::Dcg), small_train(32), e, 1);
  env::PredatorPrey env(e);
  for (int k = 0; k < 31; ++k) {
    const auto res = train::train_iteration(st, env);
    EXPECT_FALSE(res.loss.has_value());
  }
  EXPECT_EQ(st.buffer.size(), 31u);
  EXPECT_EQ(st.gradient_steps, 0u);
  EXPECT_EQ(st.online.entries()[0].value, st.target.entries()[0].value);
  const auto res = train::train_iteration(st, env);
  ASSERT_TRUE(res.loss.has_value());
  EXPECT_EQ(st.gradient_steps, 1u);
  EXPECT_EQ(st.episodes, 32u);
}

TEST(TrainIteration, CountsEnvironmentSteps) {
  const auto e = desk_env();
  auto st = train::make_trainer(model_for(e, Algo::Vdn), small_train(), e, 2);
  env::PredatorPrey env(e);
  std::size_t total = 0;
  for (int k = 0; k < 6; ++k) total += train::train_iteration(st, env).episode_length;
  EXPECT_EQ(st.t_env, total);
  EXPECT_EQ(st.buffer.newest().length, st.buffer[st.buffer.size() - 1].length);
}

TEST(TargetUpdate, CopiesExactlyAtMultiples) {
  const auto e = desk_env();
  auto tc = small_train(2);
  tc.target_update_episodes = 200;
  auto st = train::make_trainer(model_for(e, Algo::Dcg), tc, e, 3);
  env::PredatorPrey env(e);
  st.episodes = 197;
  train::train_iteration(st, env);  // 198
  train::train_iteration(st, env);  // 199
  EXPECT_EQ(st.target_updates, 0u);
  // The gradient steps moved online; target stayed at the initial parameters.
  const auto init = train::make_trainer(model_for(e, Algo::Dcg), tc, e, 3);
  for (std::size_t k = 0; k < st.target.size(); ++k) EXPECT_EQ(st.target.entries()[k].value, init.online.entries()[k].value);
  EXPECT_NE(st.online.entries()[0].value, st.target.entries()[0].value);
  train::train_iteration(st, env);  // 200
  EXPECT_EQ(st.target_updates, 1u);
  for (std::size_t k = 0; k < st.target.size(); ++k) EXPECT_EQ(st.target.entries()[k].value, st.online.entries()[k].value);
  train::train_iteration(st, env);  // 201
  EXPECT_EQ(st.target_updates, 1u);
}

TEST(TargetUpdate, CopyMakesQValuesIdentical) {
  const auto e = desk_env();
  auto st = train::make_trainer(model_for(e, Algo::Dcg), small_train(2), e, 4);
  env::PredatorPrey env(e);
  for (int k = 0; k < 4; ++k) train::train_iteration(st, env);
  st.episodes = st.config.target_update_episodes;
  ASSERT_TRUE(train::update_target(st));
  Rng rng(5);
  const Tensor h = dcg::testing::random_tensor({e.n_agents, 16}, rng);
  const AvailMask avail(e.n_agents, std::vector<bool>(env::kNumActions, true));
  const auto a = models::annotate(st.model, st.online, h, avail);
  const auto b = models::annotate(st.model, st.target, h, avail);
  EXPECT_EQ(a.f_v, b.f_v);
  EXPECT_EQ(a.f_e, b.f_e);
}

TEST(GradientStep, TargetReceivesNoGradient) {
  const auto e = desk_env();
  auto st = train::make_trainer(model_for(e, Algo::Dcg), small_train(2), e, 5);
  env::PredatorPrey env(e);
  for (int k = 0; k < 3; ++k) train::train_iteration(st, env);
  ASSERT_EQ(st.gradient_steps, 2u);
  const auto init = train::make_trainer(st.model, st.config, e, 5);
  for (std::size_t k = 0; k < st.target.size(); ++k) {
    EXPECT_EQ(st.target.entries()[k].value, init.target.entries()[k].value);
    for (double g : st.target.entries()[k].grad.data) EXPECT_EQ(g, 0.0);
  }
  EXPECT_NE(st.online.entries()[0].value, init.online.entries()[0].value);
}

TEST(GradientStep, GradientTreatsTargetsAsConstants) {
  // The gradient of the training loss equals the gradient of the loss with
  // the same targets supplied as fixed numbers.
  const auto cfg = dcg::testing::small_model(Algo::Dcg);
  Rng rng(6);
  std::vector<Episode> eps{dcg::testing::synthetic_episode(cfg, 3, false, rng), dcg::testing::synthetic_episode(cfg, 2, true, rng)};
  auto online = models::init_params(cfg, rng);
  const auto target = models::init_params(cfg, rng);
  const Batch batch(dcg::testing::pointers(eps));
  online.zero_grad();
  {
    ng::Tape tape;
    const auto on = train::unroll(tape, cfg, online, batch);
    ng::Tape frozen(false);
    const auto tg = train::unroll(frozen, cfg, target, batch);
    Rng r(1);
    tape.backward(train::dqn_loss(cfg, batch, on, train::td_targets(cfg, 0.99, batch, on, tg, r)), online);
  }
  const auto g1 = online;
  Rng r(1);
  dcg::testing::ComposedLoss fixed(cfg, eps, online, target, r);
  online.zero_grad();
  {
    ng::Tape tape;
    tape.backward(fixed(tape, online), online);
  }
  for (std::size_t k = 0; k < online.size(); ++k) EXPECT_EQ(online.entries()[k].grad, g1.entries()[k].grad);
}

TEST(TrainIteration, HundredFiniteLosses) {
  const auto e = desk_env();
  for (Algo algo : {Algo::Dcg, Algo::Vdn}) {
    auto st = train::make_trainer(model_for(e, algo), small_train(4), e, 6);
    env::PredatorPrey env(e);
    int losses = 0;
    while (losses < 100) {
      const auto res = train::train_iteration(st, env);
      if (res.loss) {
        EXPECT_TRUE(std::isfinite(*res.loss));
        ++losses;
      }
    }
    for (const auto& entry : st.online.entries()) EXPECT_TRUE(entry.value.all_finite());
  }
}

TEST(MakeTrainer, SameSeedSameState) {
  const auto e = desk_env();
  auto a = train::make_trainer(model_for(e, Algo::Dcg), small_train(), e, 7);
  auto b = train::make_trainer(model_for(e, Algo::Dcg), small_train(), e, 7);
  auto c = train::make_trainer(model_for(e, Algo::Dcg), small_train(), e, 8);
  env::PredatorPrey env(e);
  for (int k = 0; k < 6; ++k) train::train_iteration(a, env), train::train_iteration(b, env);
  EXPECT_EQ(a.buffer, b.buffer);
  EXPECT_EQ(a.online.entries()[0].value, b.online.entries()[0].value);
  EXPECT_NE(a.online.entries()[0].value, c.online.entries()[0].value);
}

// ---------------------------------------------------------------------------
// Evaluation

TEST(Evaluate, DeterministicAndBounded) {
  auto e = desk_env();
  e.episode_limit = 60;
  const auto m = model_for(e, Algo::Dcg);
  Rng init(8);
  const auto ps = models::init_params(m, init);
  Rng r1 = train::eval_rng(3, 0), r2 = train::eval_rng(3, 0);
  const auto a = train::evaluate(m, ps, e, 10, r1);
  const auto b = train::evaluate(m, ps, e, 10, r2);
  EXPECT_EQ(a.returns, b.returns);
  EXPECT_EQ(a.mean, b.mean);
  double mean = 0.0, var = 0.0;
  for (double x : a.returns) {
    EXPECT_LE(x, 10.0 * static_cast<double>(e.n_prey));
    mean += x / 10.0;
  }
  for (double x : a.returns) var += (x - mean) * (x - mean) / 10.0;
  EXPECT_NEAR(a.mean, mean, 1e-12);
  EXPECT_NEAR(a.std, std::sqrt(var), 1e-12);
  Rng r3(0);
  EXPECT_THROW(train::evaluate(m, ps, e, 0, r3), ArgumentError);
}

TEST(Evaluate, IsGreedy) {
  // Greedy episodes replay exactly under the same env stream whatever the
  // exploration stream, so evaluation equals an epsilon-0 collection.
  const auto e = desk_env();
  const auto m = model_for(e, Algo::Vdn);
  Rng init(9);
  const auto ps = models::init_params(m, init);
  Rng r(11);
  const auto res = train::evaluate(m, ps, e, 1, r);
  env::PredatorPrey env(e);
  Rng env_rng(11), other(12);
  EXPECT_EQ(res.returns[0], train::collect_episode(m, ps, env, 0.0, env_rng, other).total_return());
}

TEST(EvalRng, DistinctStreams) {
  Rng a = train::eval_rng(1, 0), b = train::eval_rng(1, 1), c = train::eval_rng(2, 0);
  const auto x = a.next(), y = b.next(), z = c.next();
  EXPECT_NE(x, y);
  EXPECT_NE(x, z);
}

// ---------------------------------------------------------------------------
// Sanity floor: one agent, two actions, one-step episodes rewarding action 1
// with +1 and action 0 with -1.

TEST(Convergence, TinyMdp) {
  for (Algo algo : {Algo::Dcg, Algo::Vdn, Algo::Iql, Algo::Lrq}) {
    models::ModelConfig m;
    m.algo = algo;
    m.n_agents = 1;
    m.n_actions = 2;
    m.obs_dim = 1;
    m.state_dim = 1;
    m.hidden = 8;
    m.lrq_factors = 2;
    train::TrainConfig tc;
    tc.batch_size = 8;
    tc.buffer_capacity = 100;
    tc.target_update_episodes = 20;
    tc.rmsprop.lr = 0.005;
    auto st = train::make_trainer(m, tc, env::EnvConfig{}, 10);
    Rng rng(12);
    JointAction greedy;
    std::size_t ep_count = 0;
    for (; ep_count < 2000; ++ep_count) {
      models::HiddenStates hs(m);
      const auto out = models::observe_step(m, st.online, hs, {{1.0f}});
      const AvailMask avail{{true, true}};
      greedy = models::greedy_action(m, out, 0, avail, rng);
      if (ep_count >= 300 && greedy == JointAction{1}) break;
      const auto a = models::select_actions(m, out, avail, 0.5, rng);
      Episode ep;
      ep.n_agents = 1;
      ep.n_actions = 2;
      ep.obs_dim = 1;
      ep.state_dim = 1;
      ep.length = 1;
      ep.obs = {1.0f, 0.0f};
      ep.states = {0.0f, 0.0f};
      ep.avail = {1, 1, 1, 1};
      ep.actions = {static_cast<std::uint16_t>(a[0])};
      ep.rewards = {a[0] == 1 ? 1.0 : -1.0};
      ep.terminal = true;
      st.buffer.push(ep);
      ++st.episodes;
      if (st.buffer.size() >= tc.batch_size) {
        std::vector<const Episode*> ptrs;
        for (auto i : st.buffer.sample(tc.batch_size, st.explore_rng)) ptrs.push_back(&st.buffer[i]);
        train::gradient_step(st, Batch(ptrs));
      }
      train::update_target(st);
    }
    EXPECT_EQ(greedy, JointAction{1}) << models::algo_name(algo);
    EXPECT_LT(ep_count, 2000u) << models::algo_name(algo);
  }
}
