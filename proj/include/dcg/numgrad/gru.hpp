#pragma once

#include <cmath>
#include <string>

#include "dcg/numgrad/ops.hpp"
#include "dcg/numgrad/params.hpp"

namespace dcg::ng {

struct GruWeights {
  Var W_z, U_z, b_z;
  Var W_r, U_r, b_r;
  Var W_h, U_h, b_h;

  static GruWeights from(Tape& tape, const ParamStore& store, const std::string& prefix) {
    auto p = [&](const char* n) { return tape.param(store, prefix + n); };
    return {p("W_z"), p("U_z"), p("b_z"), p("W_r"), p("U_r"), p("b_r"), p("W_h"), p("U_h"), p("b_h")};
  }
};

// Registers W_*, U_*, b_* under `prefix`.
inline void add_gru_params(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                           Rng& rng) {
  for (const char* g : {"z", "r", "h"}) {
    store.add(prefix + "W_" + g, uniform_init({in, hidden}, in, rng));
    store.add(prefix + "U_" + g, uniform_init({hidden, hidden}, hidden, rng));
    store.add(prefix + "b_" + g, Tensor({hidden}));
  }
}

/// Fused GRU cell:
///   z = sigmoid(x W_z + h U_z + b_z)
///   r = sigmoid(x W_r + h U_r + b_r)
///   c = tanh(x W_h + (r * h) U_h + b_h)
///   h' = (1 - z) * h + z * c
inline Var gru_cell(const Var& x, const Var& h, const GruWeights& w) {
  using namespace detail;
  require_2d(x->value, "gru_cell");
  require_2d(h->value, "gru_cell");
  const std::size_t rows = x->value.rows();
  const std::size_t in = x->value.cols();
  const std::size_t hid = h->value.cols();
  if (h->value.rows() != rows) throw DimensionError("gru_cell: batch sizes of x and h differ");
  for (const Var* m : {&w.W_z, &w.W_r, &w.W_h})
    if ((*m)->value.shape != Shape{in, hid})
      throw DimensionError("gru_cell: input weight shape " + to_string((*m)->value.shape) + " expected " +
                           to_string(Shape{in, hid}));
  for (const Var* m : {&w.U_z, &w.U_r, &w.U_h})
    if ((*m)->value.shape != Shape{hid, hid})
      throw DimensionError("gru_cell: recurrent weight shape " + to_string((*m)->value.shape) + " expected " +
                           to_string(Shape{hid, hid}));
  for (const Var* b : {&w.b_z, &w.b_r, &w.b_h})
    if ((*b)->value.size() != hid) throw DimensionError("gru_cell: bias size mismatch");

  auto gate = [&](const Var& W, const Var& U, const Var& b, const Tensor& hh) {
    Tensor a({rows, hid});
    as_mat(a).noalias() = as_mat(x->value) * as_mat(W->value);
    as_mat(a).noalias() += as_mat(hh) * as_mat(U->value);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < hid; ++k) a.at(r, k) += b->value[k];
    return a;
  };

  Tensor z = gate(w.W_z, w.U_z, w.b_z, h->value);
  for (double& v : z.data) v = sigmoid_value(v);
  Tensor r = gate(w.W_r, w.U_r, w.b_r, h->value);
  for (double& v : r.data) v = sigmoid_value(v);
  Tensor rh = r;
  for (std::size_t i = 0; i < rh.size(); ++i) rh[i] *= h->value[i];
  Tensor c = gate(w.W_h, w.U_h, w.b_h, rh);
  for (double& v : c.data) v = std::tanh(v);
  Tensor out({rows, hid});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - z[i]) * h->value[i] + z[i] * c[i];

  Node* px = x.get();
  Node* ph = h.get();
  std::vector<Node*> pw = {w.W_z.get(), w.U_z.get(), w.b_z.get(), w.W_r.get(), w.U_r.get(),
                           w.b_r.get(), w.W_h.get(), w.U_h.get(), w.b_h.get()};
  std::vector<Var> parents = {x, h, w.W_z, w.U_z, w.b_z, w.W_r, w.U_r, w.b_r, w.W_h, w.U_h, w.b_h};
  return tape_of(x).record(
      std::move(out), std::move(parents),
      [px, ph, pw, z = std::move(z), r = std::move(r), rh = std::move(rh), c = std::move(c), rows, hid](Node& o) {
        const Tensor& g = o.grad;
        const Tensor& hv = ph->value;
        Tensor da_z({rows, hid}), da_r({rows, hid}), da_h({rows, hid});
        Tensor dh({rows, hid});
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double dz = g[i] * (c[i] - hv[i]);
          const double dc = g[i] * z[i];
          dh[i] = g[i] * (1.0 - z[i]);
          da_z[i] = dz * z[i] * (1.0 - z[i]);
          da_h[i] = dc * (1.0 - c[i] * c[i]);
        }
        // Candidate path through r * h.
        Tensor drh({rows, hid});
        as_mat(drh).noalias() = as_mat(da_h) * as_mat(pw[7]->value).transpose();
        for (std::size_t i = 0; i < drh.size(); ++i) {
          da_r[i] = drh[i] * hv[i] * r[i] * (1.0 - r[i]);
          dh[i] += drh[i] * r[i];
        }
        as_mat(dh).noalias() += as_mat(da_z) * as_mat(pw[1]->value).transpose();
        as_mat(dh).noalias() += as_mat(da_r) * as_mat(pw[4]->value).transpose();

        auto accumulate_gate = [&](const Tensor& da, Node* W, Node* U, Node* b, const Tensor& hin) {
          if (W->requires_grad) as_mat(W->ensure_grad()).noalias() += as_mat(px->value).transpose() * as_mat(da);
          if (U->requires_grad) as_mat(U->ensure_grad()).noalias() += as_mat(hin).transpose() * as_mat(da);
          if (b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            for (std::size_t rr = 0; rr < rows; ++rr)
              for (std::size_t k = 0; k < hid; ++k) gb[k] += da.at(rr, k);
          }
        };
        accumulate_gate(da_z, pw[0], pw[1], pw[2], hv);
        accumulate_gate(da_r, pw[3], pw[4], pw[5], hv);
        accumulate_gate(da_h, pw[6], pw[7], pw[8], rh);

        if (px->requires_grad) {
          auto dx = as_mat(px->ensure_grad());
          dx.noalias() += as_mat(da_z) * as_mat(pw[0]->value).transpose();
          dx.noalias() += as_mat(da_r) * as_mat(pw[3]->value).transpose();
          dx.noalias() += as_mat(da_h) * as_mat(pw[6]->value).transpose();
        }
        if (ph->requires_grad) detail::add_to(*ph, dh);
      });
}

}  // namespace dcg::ng
