#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dcg/errors.hpp"
#include "dcg/graph.hpp"
#include "dcg/maxplus.hpp"
#include "dcg/numgrad.hpp"
#include "dcg/rng.hpp"

namespace dcg::models {

using ng::Tensor;
using ng::Var;

enum class Algo { Dcg, DcgS, Vdn, Iql, Lrq };

inline std::string_view algo_name(Algo a) {
  switch (a) {
    case Algo::Dcg: return "dcg";
    case Algo::DcgS: return "dcg-s";
    case Algo::Vdn: return "vdn";
    case Algo::Iql: return "iql";
    case Algo::Lrq: return "lrq";
  }
  return "?";
}

inline Algo parse_algo(std::string_view s) {
  for (Algo a : {Algo::Dcg, Algo::DcgS, Algo::Vdn, Algo::Iql, Algo::Lrq})
    if (algo_name(a) == s) return a;
  throw ArgumentError("unknown algo '" + std::string(s) + "' (expected dcg, dcg-s, vdn, iql, lrq)");
}

inline bool uses_graph(Algo a) { return a == Algo::Dcg || a == Algo::DcgS; }

struct ModelConfig {
  Algo algo = Algo::Dcg;
  std::size_t n_agents = 1;
  std::size_t n_actions = 1;
  std::size_t obs_dim = 0;
  std::size_t state_dim = 0;
  std::size_t hidden = 64;
  std::size_t rank = 0;          // payoff rank K, 0 = full A x A head
  std::size_t lrq_factors = 64;  // K for lrq
  bool share = true;             // false: per-agent encoders/heads, per-edge payoffs
  CoordinationGraph graph{1, {}};
  std::size_t k_passes = 8;
  bool msg_norm = true;
  std::size_t ascent_iters = 8;

  std::size_t input_dim() const { return obs_dim + n_actions + n_agents; }
  std::size_t payoff_outputs() const { return rank == 0 ? n_actions * n_actions : 2 * rank * n_actions; }

  std::string agent_prefix(std::size_t i) const { return share ? "" : "agent" + std::to_string(i) + "."; }
  std::string edge_prefix(std::size_t e) const { return share ? "" : "edge" + std::to_string(e) + "."; }

  void validate() const {
    if (graph.n_agents() != n_agents) throw ConfigError("graph agent count does not match n_agents");
    if (n_actions == 0 || hidden == 0) throw ConfigError("n_actions and hidden must be positive");
    if (algo == Algo::Lrq && lrq_factors == 0) throw ConfigError("lrq needs at least one factor");
    if (algo == Algo::DcgS && state_dim == 0) throw ConfigError("dcg-s needs a state dimension");
    if (k_passes == 0) throw ConfigError("k_passes must be at least 1");
  }
};

/// Creates every parameter the configured algorithm uses. Affine and GRU
/// weights are uniform in +-1/sqrt(fan_in), biases zero.
inline ng::ParamStore init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ng::ParamStore ps;
  const std::size_t H = cfg.hidden;
  const std::size_t A = cfg.n_actions;
  const std::size_t blocks = cfg.share ? 1 : cfg.n_agents;
  for (std::size_t i = 0; i < blocks; ++i) {
    const std::string p = cfg.agent_prefix(i);
    ps.add(p + "encoder.fc.W", ng::uniform_init({cfg.input_dim(), H}, cfg.input_dim(), rng));
    ps.add(p + "encoder.fc.b", Tensor({H}));
    ng::add_gru_params(ps, p + "encoder.gru.", H, H, rng);
    if (cfg.algo == Algo::Lrq) {
      ps.add(p + "factor.W", ng::uniform_init({H, cfg.lrq_factors * A}, H, rng));
      ps.add(p + "factor.b", Tensor({cfg.lrq_factors * A}));
    } else {
      ps.add(p + "utility.W", ng::uniform_init({H, A}, H, rng));
      ps.add(p + "utility.b", Tensor({A}));
    }
  }
  if (uses_graph(cfg.algo)) {
    const std::size_t edge_blocks = cfg.share ? (cfg.graph.n_edges() ? 1 : 0) : cfg.graph.n_edges();
    for (std::size_t e = 0; e < edge_blocks; ++e) {
      const std::string p = cfg.edge_prefix(e);
      ps.add(p + "payoff.W", ng::uniform_init({2 * H, cfg.payoff_outputs()}, 2 * H, rng));
      ps.add(p + "payoff.b", Tensor({cfg.payoff_outputs()}));
    }
  }
  if (cfg.algo == Algo::DcgS) {
    ps.add("state_bias.fc1.W", ng::uniform_init({cfg.state_dim, H}, cfg.state_dim, rng));
    ps.add("state_bias.fc1.b", Tensor({H}));
    ps.add("state_bias.fc2.W", ng::uniform_init({H, 1}, H, rng));
    ps.add("state_bias.fc2.b", Tensor({1}));
  }
  return ps;
}

// ---------------------------------------------------------------------------
// Batched forward pass. Rows are agent-major (row = i * S + s for S samples);
// edge rows are edge-major (row = e * S + s).

/// Encoder input rows: observation, one-hot previous action (all zero at the
/// first step), one-hot agent id.
inline void write_input_row(const ModelConfig& cfg, double* row, const float* obs, std::optional<std::size_t> prev_action,
                            std::size_t agent) {
  std::fill(row, row + cfg.input_dim(), 0.0);
  for (std::size_t k = 0; k < cfg.obs_dim; ++k) row[k] = obs[k];
  if (prev_action) row[cfg.obs_dim + *prev_action] = 1.0;
  row[cfg.obs_dim + cfg.n_actions + agent] = 1.0;
}

/// h' = gru(relu(affine(input)), h) per agent.
inline Var encode_step(ng::Tape& tape, const ModelConfig& cfg, const ng::ParamStore& ps, const Var& h_prev,
                       const Tensor& inputs, std::size_t S) {
  if (inputs.rows() != cfg.n_agents * S || inputs.cols() != cfg.input_dim())
    throw DimensionError("encode_step: inputs have shape " + ng::to_string(inputs.shape) + ", expected [" +
                         std::to_string(cfg.n_agents * S) + "x" + std::to_string(cfg.input_dim()) + "]");
  if (h_prev->value.rows() != cfg.n_agents * S || h_prev->value.cols() != cfg.hidden)
    throw DimensionError("encode_step: hidden state shape " + ng::to_string(h_prev->value.shape));
  Var x = tape.constant(inputs);
  auto block = [&](const std::string& p, const Var& xb, const Var& hb) {
    Var a = ng::relu(ng::affine(xb, tape.param(ps, p + "encoder.fc.W"), tape.param(ps, p + "encoder.fc.b")));
    return ng::gru_cell(a, hb, ng::GruWeights::from(tape, ps, p + "encoder.gru."));
  };
  if (cfg.share) return block("", x, h_prev);
  std::vector<Var> parts;
  for (std::size_t i = 0; i < cfg.n_agents; ++i)
    parts.push_back(block(cfg.agent_prefix(i), ng::slice_rows(x, i * S, (i + 1) * S), ng::slice_rows(h_prev, i * S, (i + 1) * S)));
  return ng::concat_rows(parts);
}

struct HeadOutputs {
  std::size_t samples = 0;
  Var utility;    // [(n*S) x A] utilities / per-agent Q (all but lrq)
  Var factors;    // [(n*S) x K*A] lrq factor outputs, column a*K + k
  Var payoff_ij;  // [(E*S) x P] payoff head on (h_i, h_j) for edge (i, j)
  Var payoff_ji;  // [(E*S) x P] payoff head on (h_j, h_i)
  Var bias;       // [S x 1] state bias (dcg-s with state)
};

namespace detail {

inline Var per_agent_affine(ng::Tape& tape, const ModelConfig& cfg, const ng::ParamStore& ps, const Var& h,
                            std::size_t S, const std::string& name) {
  if (cfg.share) return ng::affine(h, tape.param(ps, name + ".W"), tape.param(ps, name + ".b"));
  std::vector<Var> parts;
  for (std::size_t i = 0; i < cfg.n_agents; ++i) {
    const std::string p = cfg.agent_prefix(i) + name;
    parts.push_back(ng::affine(ng::slice_rows(h, i * S, (i + 1) * S), tape.param(ps, p + ".W"), tape.param(ps, p + ".b")));
  }
  return ng::concat_rows(parts);
}

}  // namespace detail

/// Evaluates the heads on hidden states of S samples. The payoff head acts on
/// the concatenation [h_first, h_second]; it is split as
/// h_first W[:H] + h_second W[H:] + b so each agent's projection is shared by
/// all of its edges.
inline HeadOutputs heads(ng::Tape& tape, const ModelConfig& cfg, const ng::ParamStore& ps, const Var& hidden, std::size_t S,
                         const Tensor* states = nullptr) {
  HeadOutputs out;
  out.samples = S;
  const std::size_t H = cfg.hidden;
  if (cfg.algo == Algo::Lrq) {
    out.factors = detail::per_agent_affine(tape, cfg, ps, hidden, S, "factor");
  } else {
    out.utility = detail::per_agent_affine(tape, cfg, ps, hidden, S, "utility");
  }
  const std::size_t E = cfg.graph.n_edges();
  if (uses_graph(cfg.algo) && E > 0) {
    auto rows_of = [S](std::size_t agent) {
      std::vector<std::size_t> idx(S);
      for (std::size_t s = 0; s < S; ++s) idx[s] = agent * S + s;
      return idx;
    };
    if (cfg.share) {
      Var W = tape.param(ps, "payoff.W");
      Var first = ng::affine(hidden, ng::slice_rows(W, 0, H), tape.param(ps, "payoff.b"));
      Var second = ng::matmul(hidden, ng::slice_rows(W, H, 2 * H));
      std::vector<std::size_t> ri, rj;
      for (const auto& [i, j] : cfg.graph.edges()) {
        auto a = rows_of(i), b = rows_of(j);
        ri.insert(ri.end(), a.begin(), a.end());
        rj.insert(rj.end(), b.begin(), b.end());
      }
      out.payoff_ij = ng::add(ng::gather_rows(first, ri), ng::gather_rows(second, rj));
      out.payoff_ji = ng::add(ng::gather_rows(first, rj), ng::gather_rows(second, ri));
    } else {
      std::vector<Var> pij, pji;
      for (std::size_t e = 0; e < E; ++e) {
        const auto [i, j] = cfg.graph.edge(e);
        const std::string p = cfg.edge_prefix(e);
        Var W = tape.param(ps, p + "payoff.W");
        Var b = tape.param(ps, p + "payoff.b");
        Var Wf = ng::slice_rows(W, 0, H), Ws = ng::slice_rows(W, H, 2 * H);
        Var hi = ng::slice_rows(hidden, i * S, (i + 1) * S), hj = ng::slice_rows(hidden, j * S, (j + 1) * S);
        pij.push_back(ng::add(ng::affine(hi, Wf, b), ng::matmul(hj, Ws)));
        pji.push_back(ng::add(ng::affine(hj, Wf, b), ng::matmul(hi, Ws)));
      }
      out.payoff_ij = ng::concat_rows(pij);
      out.payoff_ji = ng::concat_rows(pji);
    }
  }
  if (cfg.algo == Algo::DcgS && states) {
    if (states->rows() != S || states->cols() != cfg.state_dim) throw DimensionError("heads: state batch shape mismatch");
    Var s = tape.constant(*states);
    Var a = ng::relu(ng::affine(s, tape.param(ps, "state_bias.fc1.W"), tape.param(ps, "state_bias.fc1.b")));
    out.bias = ng::affine(a, tape.param(ps, "state_bias.fc2.W"), tape.param(ps, "state_bias.fc2.b"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-sample views on head values (no gradients).

/// M[a, b] = sum_k f_hat[a, k] f_bar[b, k].
inline Tensor low_rank_payoff(const Tensor& f_hat, const Tensor& f_bar) {
  if (f_hat.rank() != 2 || f_bar.rank() != 2 || f_hat.cols() != f_bar.cols())
    throw DimensionError("low_rank_payoff: factor shapes " + ng::to_string(f_hat.shape) + " and " + ng::to_string(f_bar.shape) + " disagree in K");
  if (f_hat.cols() == 0) throw ArgumentError("low_rank_payoff: K must be at least 1");
  const std::size_t K = f_hat.cols();
  Tensor m({f_hat.rows(), f_bar.rows()});
  for (std::size_t a = 0; a < f_hat.rows(); ++a)
    for (std::size_t b = 0; b < f_bar.rows(); ++b) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += f_hat.at(a, k) * f_bar.at(b, k);
      m.at(a, b) = s;
    }
  return m;
}

namespace detail {

// Splits one low-rank payoff output row into (F_hat, F_bar), each [A x K].
inline std::pair<Tensor, Tensor> split_factors(const double* row, std::size_t A, std::size_t K) {
  Tensor hat({A, K}), bar({A, K});
  for (std::size_t i = 0; i < A * K; ++i) {
    hat[i] = row[i];
    bar[i] = row[A * K + i];
  }
  return {std::move(hat), std::move(bar)};
}

}  // namespace detail

/// Utility and symmetrized payoff tensors for sample s. Unavailable utilities
/// are set to kNegLarge; payoffs are left unmasked.
///   full:     f_e = (P(h_i, h_j) + P(h_j, h_i)^T) / 2
///   rank K:   f_e = (F_hat F_bar^T + F_bar' F_hat'^T) / 2
inline AnnotatedGraph annotate(const ModelConfig& cfg, const HeadOutputs& out, std::size_t s, const AvailMask& avail) {
  if (!uses_graph(cfg.algo) && cfg.algo != Algo::Vdn && cfg.algo != Algo::Iql)
    throw ContractError("annotate: algorithm has no utility head");
  const std::size_t n = cfg.n_agents, A = cfg.n_actions, S = out.samples;
  const CoordinationGraph& g = uses_graph(cfg.algo) ? cfg.graph : CoordinationGraph(n, {});
  AnnotatedGraph ag(g, A);
  if (avail.size() != n) throw DimensionError("annotate: availability mask needs one row per agent");
  ag.avail = avail;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < A; ++a) ag.f_v.at(i, a) = out.utility->value.at(i * S + s, a);
  ag.apply_mask();
  const std::size_t E = ag.graph.n_edges();
  for (std::size_t e = 0; e < E; ++e) {
    const double* pij = out.payoff_ij->value.row_ptr(e * S + s);
    const double* pji = out.payoff_ji->value.row_ptr(e * S + s);
    if (cfg.rank == 0) {
      for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < A; ++b) ag.f_e.at(e, a, b) = 0.5 * (pij[a * A + b] + pji[b * A + a]);
    } else {
      auto [hat, bar] = detail::split_factors(pij, A, cfg.rank);
      auto [hat2, bar2] = detail::split_factors(pji, A, cfg.rank);
      const Tensor m1 = low_rank_payoff(hat, bar);
      const Tensor m2 = low_rank_payoff(bar2, hat2);
      for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < A; ++b) ag.f_e.at(e, a, b) = 0.5 * (m1.at(a, b) + m2.at(a, b));
    }
  }
  return ag;
}

/// Annotation straight from per-agent hidden states [n x H].
inline AnnotatedGraph annotate(const ModelConfig& cfg, const ng::ParamStore& ps, const Tensor& hidden, const AvailMask& avail) {
  ng::Tape tape(false);
  HeadOutputs out = heads(tape, cfg, ps, tape.constant(hidden), 1);
  return annotate(cfg, out, 0, avail);
}

inline void require_available(const AvailMask& avail, const JointAction& a) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] >= avail[i].size() || !avail[i][a[i]])
      throw ContractError("agent " + std::to_string(i) + " action " + std::to_string(a[i]) + " is unavailable");
}

/// DCG value of a joint action; dcg-s adds the state bias when it was computed.
/// With `training` set, dcg-s insists on a state bias.
inline double dcg_q(const ModelConfig& cfg, const AnnotatedGraph& ag, const HeadOutputs& out, std::size_t s, const JointAction& a,
                    bool training = false) {
  if (cfg.algo == Algo::DcgS && training && !out.bias) throw ContractError("dcg-s requires the global state during training");
  std::optional<double> bias;
  if (cfg.algo == Algo::DcgS && out.bias) bias = out.bias->value[s];
  return q_value(ag, a, bias);
}

// Unnormalized sum of utilities.
inline double vdn_q(const ModelConfig& cfg, const HeadOutputs& out, std::size_t s, const JointAction& a, const AvailMask* avail = nullptr) {
  if (avail) require_available(*avail, a);
  double q = 0.0;
  for (std::size_t i = 0; i < cfg.n_agents; ++i) q += out.utility->value.at(i * out.samples + s, a[i]);
  return q;
}

inline double iql_q(const ModelConfig& cfg, const HeadOutputs& out, std::size_t s, std::size_t agent, std::size_t action,
                    const AvailMask* avail = nullptr) {
  if (avail && !(*avail)[agent][action]) throw ContractError("iql_q: unavailable action");
  (void)cfg;
  return out.utility->value.at(agent * out.samples + s, action);
}

// sum_k prod_i f^k(a_i | h_i)
inline double lrq_q(const ModelConfig& cfg, const HeadOutputs& out, std::size_t s, const JointAction& a) {
  const std::size_t K = cfg.lrq_factors;
  double q = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    double prod = 1.0;
    for (std::size_t i = 0; i < cfg.n_agents; ++i) prod *= out.factors->value.at(i * out.samples + s, a[i] * K + k);
    q += prod;
  }
  return q;
}

/// Greedy joint action for sample s: max-plus for dcg/dcg-s, independent
/// argmax for vdn/iql, coordinate ascent for lrq.
inline JointAction greedy_action(const ModelConfig& cfg, const HeadOutputs& out, std::size_t s, const AvailMask& avail, Rng& rng) {
  const std::size_t n = cfg.n_agents;
  switch (cfg.algo) {
    case Algo::Dcg:
    case Algo::DcgS:
      return greedy_maxplus(annotate(cfg, out, s, avail), cfg.k_passes, cfg.msg_norm).action;
    case Algo::Vdn:
    case Algo::Iql: {
      dcg::detail::require_feasible(avail);
      JointAction a(n);
      for (std::size_t i = 0; i < n; ++i) a[i] = dcg::detail::masked_argmax(out.utility->value.row_ptr(i * out.samples + s), avail[i]);
      return a;
    }
    case Algo::Lrq: {
      auto fn = [&](const JointAction& a) { return lrq_q(cfg, out, s, a); };
      return coordinate_ascent(fn, avail, cfg.ascent_iters, rng).first;
    }
  }
  return {};
}

/// Value the algorithm assigns to joint action a in sample s (per-agent values
/// for iql). Used to evaluate bootstrap targets.
inline std::vector<double> action_values(const ModelConfig& cfg, const HeadOutputs& out, std::size_t s, const AvailMask& avail,
                                         const JointAction& a) {
  switch (cfg.algo) {
    case Algo::Dcg:
    case Algo::DcgS:
      return {dcg_q(cfg, annotate(cfg, out, s, avail), out, s, a)};
    case Algo::Vdn:
      return {vdn_q(cfg, out, s, a)};
    case Algo::Iql: {
      std::vector<double> v(cfg.n_agents);
      for (std::size_t i = 0; i < cfg.n_agents; ++i) v[i] = iql_q(cfg, out, s, i, a[i]);
      return v;
    }
    case Algo::Lrq:
      return {lrq_q(cfg, out, s, a)};
  }
  return {};
}

/// Tape-registered values of the executed joint actions, one per sample
/// ([S x 1]), or one per agent and sample ([(n*S) x 1]) for iql.
inline Var executed_q(const ModelConfig& cfg, const HeadOutputs& out, const std::vector<JointAction>& actions) {
  const std::size_t S = out.samples, n = cfg.n_agents, A = cfg.n_actions;
  if (actions.size() != S) throw DimensionError("executed_q: one joint action per sample required");
  std::vector<std::size_t> sample_of(n * S);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < S; ++s) sample_of[i * S + s] = s;

  if (cfg.algo == Algo::Lrq) {
    const std::size_t K = cfg.lrq_factors;
    std::vector<std::size_t> cols(n * S * K);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t k = 0; k < K; ++k) cols[(i * S + s) * K + k] = actions[s][i] * K + k;
    Var picked = ng::gather_cols(out.factors, std::move(cols), K);
    return ng::row_sum(ng::segment_prod(picked, sample_of, S));
  }

  std::vector<std::size_t> util_cols(n * S);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < S; ++s) util_cols[i * S + s] = actions[s][i];
  Var util = ng::gather_cols(out.utility, std::move(util_cols), 1);
  if (cfg.algo == Algo::Iql) return util;
  Var q = ng::segment_sum(util, sample_of, S);
  if (cfg.algo == Algo::Vdn) return q;

  q = ng::scale(q, 1.0 / static_cast<double>(n));
  const std::size_t E = cfg.graph.n_edges();
  if (E > 0) {
    std::vector<std::size_t> edge_sample(E * S);
    Var pay;
    if (cfg.rank == 0) {
      std::vector<std::size_t> cij(E * S), cji(E * S);
      for (std::size_t e = 0; e < E; ++e) {
        const auto [i, j] = cfg.graph.edge(e);
        for (std::size_t s = 0; s < S; ++s) {
          edge_sample[e * S + s] = s;
          cij[e * S + s] = actions[s][i] * A + actions[s][j];
          cji[e * S + s] = actions[s][j] * A + actions[s][i];
        }
      }
      pay = ng::add(ng::gather_cols(out.payoff_ij, std::move(cij), 1), ng::gather_cols(out.payoff_ji, std::move(cji), 1));
    } else {
      const std::size_t K = cfg.rank;
      std::vector<std::size_t> hat_i(E * S * K), bar_j(E * S * K), bar_i2(E * S * K), hat_j2(E * S * K);
      for (std::size_t e = 0; e < E; ++e) {
        const auto [i, j] = cfg.graph.edge(e);
        for (std::size_t s = 0; s < S; ++s) {
          edge_sample[e * S + s] = s;
          const std::size_t ai = actions[s][i], aj = actions[s][j];
          for (std::size_t k = 0; k < K; ++k) {
            const std::size_t r = (e * S + s) * K + k;
            hat_i[r] = ai * K + k;            // F_hat[a_i, k] from (h_i, h_j)
            bar_j[r] = A * K + aj * K + k;    // F_bar[a_j, k] from (h_i, h_j)
            bar_i2[r] = A * K + ai * K + k;   // F_bar'[a_i, k] from (h_j, h_i)
            hat_j2[r] = aj * K + k;           // F_hat'[a_j, k] from (h_j, h_i)
          }
        }
      }
      Var t1 = ng::row_sum(ng::mul(ng::gather_cols(out.payoff_ij, std::move(hat_i), K), ng::gather_cols(out.payoff_ij, std::move(bar_j), K)));
      Var t2 = ng::row_sum(ng::mul(ng::gather_cols(out.payoff_ji, std::move(bar_i2), K), ng::gather_cols(out.payoff_ji, std::move(hat_j2), K)));
      pay = ng::add(t1, t2);
    }
    Var per_sample = ng::segment_sum(ng::scale(pay, 0.5), edge_sample, S);
    q = ng::add(q, ng::scale(per_sample, 1.0 / static_cast<double>(E)));
  }
  if (cfg.algo == Algo::DcgS && out.bias) q = ng::add(q, out.bias);
  return q;
}

// ---------------------------------------------------------------------------
// Single-episode acting.

/// Recurrent state of all agents for one episode, reset to zero at the start.
struct HiddenStates {
  Tensor h;  // [n x H]
  std::optional<JointAction> prev_action;

  explicit HiddenStates(const ModelConfig& cfg) : h({cfg.n_agents, cfg.hidden}) {}
};

/// Advances the hidden states with this step's observations and returns the
/// head values for the new state (one sample).
inline HeadOutputs observe_step(const ModelConfig& cfg, const ng::ParamStore& ps, HiddenStates& hs,
                                const std::vector<std::vector<float>>& obs, const std::vector<double>* state = nullptr) {
  ng::Tape tape(false);
  Tensor in({cfg.n_agents, cfg.input_dim()});
  for (std::size_t i = 0; i < cfg.n_agents; ++i) {
    std::optional<std::size_t> prev;
    if (hs.prev_action) prev = (*hs.prev_action)[i];
    write_input_row(cfg, in.row_ptr(i), obs[i].data(), prev, i);
  }
  Var h = encode_step(tape, cfg, ps, tape.constant(hs.h), in, 1);
  hs.h = h->value;
  std::optional<Tensor> st;
  if (state) st = Tensor({1, state->size()}, *state);
  return heads(tape, cfg, ps, h, 1, st ? &*st : nullptr);
}

/// Per-agent epsilon-greedy: each agent independently takes a uniformly random
/// available action with probability epsilon, else its greedy component.
inline JointAction select_actions(const ModelConfig& cfg, const HeadOutputs& out, const AvailMask& avail, double epsilon, Rng& rng) {
  if (epsilon < 0.0 || epsilon > 1.0) throw ArgumentError("select_actions: epsilon must lie in [0, 1]");
  dcg::detail::require_feasible(avail);
  JointAction a = greedy_action(cfg, out, 0, avail, rng);
  if (epsilon == 0.0) return a;
  for (std::size_t i = 0; i < cfg.n_agents; ++i) {
    if (!rng.bernoulli(epsilon)) continue;
    std::vector<std::size_t> opts;
    for (std::size_t x = 0; x < avail[i].size(); ++x)
      if (avail[i][x]) opts.push_back(x);
    a[i] = opts[rng.uniform_int(opts.size())];
  }
  return a;
}

}  // namespace dcg::models
