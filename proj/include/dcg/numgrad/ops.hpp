#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <numeric>
#include <vector>

#include "dcg/errors.hpp"
#include "dcg/numgrad/tape.hpp"

namespace dcg::ng {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline ConstMap as_mat(const Tensor& t) { return ConstMap(t.data.data(), t.rows(), t.cols()); }
inline MutMap as_mat(Tensor& t) { return MutMap(t.data.data(), t.rows(), t.cols()); }

inline void require_2d(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + to_string(t.shape));
}

inline Tape& tape_of(const Var& v) { return *v->tape; }

// out[r,:] = a[r,:] @ b
inline Tensor matmul_values(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  as_mat(out).noalias() = as_mat(a) * as_mat(b);
  return out;
}

inline void add_to(Node& n, const Tensor& g) {
  Tensor& dst = n.ensure_grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

}  // namespace detail

/// y = a @ b for a:[B×I], b:[I×O].
inline Var matmul(const Var& a, const Var& b) {
  using namespace detail;
  require_2d(a->value, "matmul");
  require_2d(b->value, "matmul");
  if (a->value.cols() != b->value.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + to_string(a->value.shape) + " @ " +
                         to_string(b->value.shape));
  }
  Node* pa = a.get();
  Node* pb = b.get();
  return tape_of(a).record(matmul_values(a->value, b->value), {a, b}, [pa, pb](Node& out) {
    if (pa->requires_grad) as_mat(pa->ensure_grad()).noalias() += as_mat(out.grad) * as_mat(pb->value).transpose();
    if (pb->requires_grad) as_mat(pb->ensure_grad()).noalias() += as_mat(pa->value).transpose() * as_mat(out.grad);
  });
}

/// y[b,o] = sum_i x[b,i] W[i,o] + bias[o].
inline Var affine(const Var& x, const Var& w, const Var& bias) {
  using namespace detail;
  require_2d(x->value, "affine");
  require_2d(w->value, "affine");
  const std::size_t out_dim = w->value.cols();
  if (x->value.cols() != w->value.rows() || bias->value.size() != out_dim) {
    throw DimensionError("affine: incompatible shapes x" + to_string(x->value.shape) + " W" +
                         to_string(w->value.shape) + " b" + to_string(bias->value.shape));
  }
  Tensor y = matmul_values(x->value, w->value);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double* row = y.row_ptr(r);
    for (std::size_t o = 0; o < out_dim; ++o) row[o] += bias->value[o];
  }
  Node* px = x.get();
  Node* pw = w.get();
  Node* pb = bias.get();
  return tape_of(x).record(std::move(y), {x, w, bias}, [px, pw, pb](Node& out) {
    if (px->requires_grad) as_mat(px->ensure_grad()).noalias() += as_mat(out.grad) * as_mat(pw->value).transpose();
    if (pw->requires_grad) as_mat(pw->ensure_grad()).noalias() += as_mat(px->value).transpose() * as_mat(out.grad);
    if (pb->requires_grad) {
      Tensor& gb = pb->ensure_grad();
      for (std::size_t r = 0; r < out.grad.rows(); ++r) {
        const double* g = out.grad.row_ptr(r);
        for (std::size_t o = 0; o < gb.size(); ++o) gb[o] += g[o];
      }
    }
  });
}

inline Var add(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "add");
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b->value[i];
  Node* pa = a.get();
  Node* pb = b.get();
  return detail::tape_of(a).record(std::move(y), {a, b}, [pa, pb](Node& out) {
    if (pa->requires_grad) detail::add_to(*pa, out.grad);
    if (pb->requires_grad) detail::add_to(*pb, out.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "sub");
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b->value[i];
  Node* pa = a.get();
  Node* pb = b.get();
  return detail::tape_of(a).record(std::move(y), {a, b}, [pa, pb](Node& out) {
    if (pa->requires_grad) detail::add_to(*pa, out.grad);
    if (pb->requires_grad) {
      Tensor& g = pb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= out.grad[i];
    }
  });
}

// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "mul");
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b->value[i];
  Node* pa = a.get();
  Node* pb = b.get();
  return detail::tape_of(a).record(std::move(y), {a, b}, [pa, pb](Node& out) {
    if (pa->requires_grad) {
      Tensor& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      Tensor& g = pb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * pa->value[i];
    }
  });
}

inline Var scale(const Var& a, double c) {
  Tensor y = a->value;
  for (double& v : y.data) v *= c;
  Node* pa = a.get();
  return detail::tape_of(a).record(std::move(y), {a}, [pa, c](Node& out) {
    Tensor& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * out.grad[i];
  });
}

// Subgradient at 0 is 0.
inline Var relu(const Var& a) {
  Tensor y = a->value;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  Node* pa = a.get();
  return detail::tape_of(a).record(std::move(y), {a}, [pa](Node& out) {
    Tensor& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (pa->value[i] > 0.0) g[i] += out.grad[i];
  });
}

inline double sigmoid_value(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Var sigmoid(const Var& a) {
  Tensor y = a->value;
  for (double& v : y.data) v = sigmoid_value(v);
  Node* pa = a.get();
  return detail::tape_of(a).record(std::move(y), {a}, [pa](Node& out) {
    Tensor& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = out.value[i];
      g[i] += out.grad[i] * s * (1.0 - s);
    }
  });
}

inline Var tanh(const Var& a) {
  Tensor y = a->value;
  for (double& v : y.data) v = std::tanh(v);
  Node* pa = a.get();
  return detail::tape_of(a).record(std::move(y), {a}, [pa](Node& out) {
    Tensor& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double t = out.value[i];
      g[i] += out.grad[i] * (1.0 - t * t);
    }
  });
}

/// Rows of x selected (with repetition) by idx.
inline Var gather_rows(const Var& x, std::vector<std::size_t> idx) {
  const Tensor& xv = x->value;
  const std::size_t c = xv.cols();
  Tensor y({idx.size(), c});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= xv.rows()) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(xv.row_ptr(idx[r]), c, y.row_ptr(r));
  }
  Node* px = x.get();
  return detail::tape_of(x).record(std::move(y), {x}, [px, idx = std::move(idx), c](Node& out) {
    Tensor& g = px->ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double* dst = g.row_ptr(idx[r]);
      const double* src = out.grad.row_ptr(r);
      for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
    }
  });
}

inline Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x->value.rows()) throw DimensionError("slice_rows: range out of bounds");
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return gather_rows(x, std::move(idx));
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: no inputs");
  const std::size_t c = parts.front()->value.cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p->value.cols() != c) throw DimensionError("concat_rows: column counts differ");
    rows += p->value.rows();
  }
  Tensor y({rows, c});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data.begin(), p->value.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += p->value.size();
  }
  std::vector<Node*> raw;
  for (const auto& p : parts) raw.push_back(p.get());
  return detail::tape_of(parts.front()).record(std::move(y), parts, [raw](Node& out) {
    std::size_t off = 0;
    for (Node* p : raw) {
      const std::size_t n = p->value.size();
      if (p->requires_grad) {
        Tensor& g = p->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) g[i] += out.grad[off + i];
      }
      off += n;
    }
  });
}

/// [a | b] along columns; row counts must agree.
inline Var concat_cols(const Var& a, const Var& b) {
  const std::size_t r = a->value.rows();
  if (b->value.rows() != r) throw DimensionError("concat_cols: row counts differ");
  const std::size_t ca = a->value.cols();
  const std::size_t cb = b->value.cols();
  Tensor y({r, ca + cb});
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a->value.row_ptr(i), ca, y.row_ptr(i));
    std::copy_n(b->value.row_ptr(i), cb, y.row_ptr(i) + ca);
  }
  Node* pa = a.get();
  Node* pb = b.get();
  return detail::tape_of(a).record(std::move(y), {a, b}, [pa, pb, r, ca, cb](Node& out) {
    for (std::size_t i = 0; i < r; ++i) {
      const double* g = out.grad.row_ptr(i);
      if (pa->requires_grad) {
        double* d = pa->ensure_grad().row_ptr(i);
        for (std::size_t k = 0; k < ca; ++k) d[k] += g[k];
      }
      if (pb->requires_grad) {
        double* d = pb->ensure_grad().row_ptr(i);
        for (std::size_t k = 0; k < cb; ++k) d[k] += g[ca + k];
      }
    }
  });
}

/// y[r, j] = x[r, idx[r*m + j]] for j < m.
inline Var gather_cols(const Var& x, std::vector<std::size_t> idx, std::size_t m) {
  const Tensor& xv = x->value;
  const std::size_t r = xv.rows();
  const std::size_t c = xv.cols();
  if (idx.size() != r * m) throw DimensionError("gather_cols: index count does not match rows x m");
  Tensor y({r, m});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t col = idx[i * m + j];
      if (col >= c) throw DimensionError("gather_cols: column index out of range");
      y.at(i, j) = xv.at(i, col);
    }
  Node* px = x.get();
  return detail::tape_of(x).record(std::move(y), {x}, [px, idx = std::move(idx), r, m](Node& out) {
    Tensor& g = px->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < m; ++j) g.at(i, idx[i * m + j]) += out.grad.at(i, j);
  });
}

// Per-row sum -> [R x 1].
inline Var row_sum(const Var& x) {
  const std::size_t r = x->value.rows();
  const std::size_t c = x->value.cols();
  Tensor y({r, 1});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    const double* row = x->value.row_ptr(i);
    for (std::size_t k = 0; k < c; ++k) s += row[k];
    y[i] = s;
  }
  Node* px = x.get();
  return detail::tape_of(x).record(std::move(y), {x}, [px, r, c](Node& out) {
    Tensor& g = px->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      double* d = g.row_ptr(i);
      for (std::size_t k = 0; k < c; ++k) d[k] += out.grad[i];
    }
  });
}

/// Sums rows of x into `groups` output rows according to seg[r].
inline Var segment_sum(const Var& x, std::vector<std::size_t> seg, std::size_t groups) {
  const std::size_t r = x->value.rows();
  const std::size_t c = x->value.cols();
  if (seg.size() != r) throw DimensionError("segment_sum: one segment id per row required");
  Tensor y({groups, c});
  for (std::size_t i = 0; i < r; ++i) {
    if (seg[i] >= groups) throw DimensionError("segment_sum: segment id out of range");
    double* d = y.row_ptr(seg[i]);
    const double* s = x->value.row_ptr(i);
    for (std::size_t k = 0; k < c; ++k) d[k] += s[k];
  }
  Node* px = x.get();
  return detail::tape_of(x).record(std::move(y), {x}, [px, seg = std::move(seg), r, c](Node& out) {
    Tensor& g = px->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      double* d = g.row_ptr(i);
      const double* s = out.grad.row_ptr(seg[i]);
      for (std::size_t k = 0; k < c; ++k) d[k] += s[k];
    }
  });
}

/// Elementwise product of the rows in each segment.
inline Var segment_prod(const Var& x, std::vector<std::size_t> seg, std::size_t groups) {
  const std::size_t r = x->value.rows();
  const std::size_t c = x->value.cols();
  if (seg.size() != r) throw DimensionError("segment_prod: one segment id per row required");
  Tensor y({groups, c}, 1.0);
  std::vector<std::vector<std::size_t>> members(groups);
  for (std::size_t i = 0; i < r; ++i) {
    if (seg[i] >= groups) throw DimensionError("segment_prod: segment id out of range");
    members[seg[i]].push_back(i);
    double* d = y.row_ptr(seg[i]);
    const double* s = x->value.row_ptr(i);
    for (std::size_t k = 0; k < c; ++k) d[k] *= s[k];
  }
  Node* px = x.get();
  return detail::tape_of(x).record(std::move(y), {x}, [px, members = std::move(members), c](Node& out) {
    Tensor& g = px->ensure_grad();
    // Products of the other members are formed explicitly so zeros are handled.
    for (std::size_t grp = 0; grp < members.size(); ++grp) {
      const auto& mem = members[grp];
      for (std::size_t a = 0; a < mem.size(); ++a)
        for (std::size_t k = 0; k < c; ++k) {
          double p = out.grad.at(grp, k);
          for (std::size_t b = 0; b < mem.size(); ++b)
            if (b != a) p *= px->value.at(mem[b], k);
          g.at(mem[a], k) += p;
        }
    }
  });
}

inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x->value.data) s += v;
  Node* px = x.get();
  return detail::tape_of(x).record(Tensor::scalar(s), {x}, [px](Node& out) {
    Tensor& g = px->ensure_grad();
    for (double& v : g.data) v += out.grad[0];
  });
}

/// sum_i w[i] * x[i]; w is a constant.
inline Var weighted_sum(const Var& x, Tensor w) {
  if (w.size() != x->value.size()) throw DimensionError("weighted_sum: weight count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x->value[i];
  Node* px = x.get();
  return detail::tape_of(x).record(Tensor::scalar(s), {x}, [px, w = std::move(w)](Node& out) {
    Tensor& g = px->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += w[i] * out.grad[0];
  });
}

}  // namespace dcg::ng
