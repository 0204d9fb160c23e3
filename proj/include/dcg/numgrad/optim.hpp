#pragma once

#include <cmath>
#include <vector>

#include "dcg/errors.hpp"
#include "dcg/numgrad/params.hpp"

namespace dcg::ng {

/// Rescales all gradients jointly so that their combined L2 norm does not
/// exceed max_norm. Returns the norm before clipping.
inline double clip_global_norm(std::vector<Tensor*> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ArgumentError("clip_global_norm: max_norm must be positive");
  double sq = 0.0;
  for (const Tensor* g : grads)
    for (double v : g->data) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor* g : grads)
      for (double& v : g->data) v *= s;
  }
  return norm;
}

inline double clip_global_norm(ParamStore& store, double max_norm) {
  std::vector<Tensor*> grads;
  for (auto& e : store.entries()) grads.push_back(&e.grad);
  return clip_global_norm(std::move(grads), max_norm);
}

struct RmsPropConfig {
  double lr = 0.0005;
  double alpha = 0.99;
  double eps = 1e-5;
};

struct OptimState {
  RmsPropConfig config;
  std::vector<Tensor> mean_square;  // mirrors ParamStore order

  OptimState() = default;
  OptimState(const ParamStore& store, RmsPropConfig cfg) : config(cfg) {
    for (const auto& e : store.entries()) mean_square.emplace_back(e.value.shape);
  }
};

/// m <- alpha m + (1 - alpha) g^2;  theta <- theta - lr g / (sqrt(m) + eps).
/// Gradients are zeroed afterwards.
inline void rmsprop_step(ParamStore& store, OptimState& state) {
  auto& entries = store.entries();
  if (state.mean_square.size() != entries.size()) throw DimensionError("rmsprop_step: optimizer state does not match parameters");
  const auto [lr, alpha, eps] = state.config;
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto& e = entries[p];
    Tensor& m = state.mean_square[p];
    require_same_shape(m, e.value, "rmsprop_step");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = e.grad[i];
      m[i] = alpha * m[i] + (1.0 - alpha) * g * g;
      const double upd = lr * g / (std::sqrt(m[i]) + eps);
      if (std::isnan(upd)) throw NumericError("rmsprop_step: NaN update for parameter '" + e.name + "'");
      e.value[i] -= upd;
    }
  }
  store.zero_grad();
}

}  // namespace dcg::ng
