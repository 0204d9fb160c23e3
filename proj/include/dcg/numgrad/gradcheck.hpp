#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "dcg/numgrad/tape.hpp"
#include "dcg/rng.hpp"

namespace dcg::ng {

using LossBuilder = std::function<Var(Tape&, const ParamStore&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients against central differences
/// (L(theta+h) - L(theta-h)) / 2h. Relative error is
/// |analytic - numeric| / max(|analytic|, 1e-8). With samples_per_param == 0
/// every entry is checked, otherwise that many entries per tensor are drawn.
inline GradCheckReport finite_diff_check(const LossBuilder& loss_fn, ParamStore& params, double h,
                                         std::size_t samples_per_param = 0, std::uint64_t seed = 0) {
  params.zero_grad();
  {
    Tape tape;
    Var loss = loss_fn(tape, params);
    tape.backward(loss, params);
  }
  auto eval = [&]() {
    Tape tape(false);
    return loss_fn(tape, params)->value[0];
  };

  GradCheckReport rep;
  Rng rng(seed);
  for (auto& e : params.entries()) {
    std::vector<std::size_t> idx;
    if (samples_per_param == 0 || samples_per_param >= e.value.size()) {
      idx.resize(e.value.size());
      std::iota(idx.begin(), idx.end(), 0);
    } else {
      for (std::size_t s = 0; s < samples_per_param; ++s) idx.push_back(rng.uniform_int(e.value.size()));
    }
    for (std::size_t i : idx) {
      const double orig = e.value[i];
      e.value[i] = orig + h;
      const double up = eval();
      e.value[i] = orig - h;
      const double down = eval();
      e.value[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = e.grad[i];
      const double err = std::abs(analytic - numeric) / std::max(std::abs(analytic), 1e-8);
      ++rep.checked;
      if (err > rep.max_rel_error || rep.checked == 1) {
        rep.max_rel_error = std::max(rep.max_rel_error, err);
        if (err >= rep.max_rel_error) {
          rep.worst_param = e.name;
          rep.worst_index = i;
          rep.worst_analytic = analytic;
          rep.worst_numeric = numeric;
        }
      }
    }
  }
  params.zero_grad();
  return rep;
}

}  // namespace dcg::ng
