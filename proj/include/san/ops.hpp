#ifndef SAN_OPS_HPP
#define SAN_OPS_HPP

// Differentiable primitives. Every function computes its forward value
// eagerly and, when a tape is active and some input requires a gradient,
// records a node whose closure accumulates input gradients.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "san/tensor.hpp"

namespace san::ops {

namespace detail {

using RowMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

inline MapC view(std::span<const real> s, std::size_t r, std::size_t c) {
  return MapC(s.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
inline Map view(std::span<real> s, std::size_t r, std::size_t c) {
  return Map(s.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

[[noreturn]] inline void shape_error(Primitive op, const std::string& what) {
  throw DimensionError(std::string(primitive_name(op)) + ": " + what);
}

inline void require_rank(Primitive op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    shape_error(op, "expected rank " + std::to_string(rank) + ", got shape " +
                        shape_string(t.shape()));
  }
}

template <class Backward>
Tensor finish(Primitive op, std::vector<Tensor> inputs, Tensor out, Backward backward) {
  san::detail::check_finite(op, out);
  Tape* tape = active_tape();
  if (tape == nullptr) return out;
  bool tracked = std::any_of(inputs.begin(), inputs.end(),
                             [](const Tensor& t) { return t.requires_grad(); });
  if (!tracked) return out;
  out.set_requires_grad(true);
  tape->record(op, std::move(inputs), out, std::move(backward));
  return out;
}

// Decomposes a shape around `axis` into (outer, extent, inner) strides.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};
inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace detail

/// A·B for A (n×k), B (k×m).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  using namespace detail;
  require_rank(Primitive::matmul, a, 2);
  require_rank(Primitive::matmul, b, 2);
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) {
    shape_error(Primitive::matmul, shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out = Tensor::zeros({n, m});
  view(out.mutable_values(), n, m).noalias() = view(a.values(), n, k) * view(b.values(), k, m);
  return finish(Primitive::matmul, {a, b}, out, [a, b, out, n, k, m]() mutable {
    auto g = view(out.grad(), n, m);
    if (a.requires_grad()) view(a.mutable_grad(), n, k).noalias() += g * view(b.values(), k, m).transpose();
    if (b.requires_grad()) view(b.mutable_grad(), k, m).noalias() += view(a.values(), n, k).transpose() * g;
  });
}

/// A·Bᵀ for A (n×k), B (m×k). Weight matrices are stored (out×in), so a
/// batch of row vectors X maps through W as matmul_nt(X, W).
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  using namespace detail;
  require_rank(Primitive::matmul_nt, a, 2);
  require_rank(Primitive::matmul_nt, b, 2);
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(0);
  if (b.dim(1) != k) {
    shape_error(Primitive::matmul_nt,
                shape_string(a.shape()) + " x transpose" + shape_string(b.shape()));
  }
  Tensor out = Tensor::zeros({n, m});
  view(out.mutable_values(), n, m).noalias() =
      view(a.values(), n, k) * view(b.values(), m, k).transpose();
  return finish(Primitive::matmul_nt, {a, b}, out, [a, b, out, n, k, m]() mutable {
    auto g = view(out.grad(), n, m);
    if (a.requires_grad()) view(a.mutable_grad(), n, k).noalias() += g * view(b.values(), m, k);
    if (b.requires_grad()) view(b.mutable_grad(), m, k).noalias() += g.transpose() * view(a.values(), n, k);
  });
}

namespace detail {
inline void require_same_shape(Primitive op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_error(op, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}
}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(Primitive::add, a, b);
  std::vector<real> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  Tensor out(a.shape(), std::move(v));
  return detail::finish(Primitive::add, {a, b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(Primitive::sub, a, b);
  std::vector<real> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
  Tensor out(a.shape(), std::move(v));
  return detail::finish(Primitive::sub, {a, b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

/// Elementwise (Hadamard) product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(Primitive::mul, a, b);
  std::vector<real> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  Tensor out(a.shape(), std::move(v));
  return detail::finish(Primitive::mul, {a, b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
    }
  });
}

/// Adds a vector to every row of M (R×C). With v of shape (G×C), rows are
/// split into G consecutive groups of R/G and group j receives row j of v;
/// a rank-1 v of length C is the single-group case (bias broadcast).
inline Tensor add_rows(const Tensor& m, const Tensor& v) {
  using namespace detail;
  require_rank(Primitive::add_rows, m, 2);
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  std::size_t groups = 0;
  if (v.rank() == 1 && v.dim(0) == cols) {
    groups = 1;
  } else if (v.rank() == 2 && v.dim(1) == cols && v.dim(0) > 0 && rows % v.dim(0) == 0) {
    groups = v.dim(0);
  } else {
    shape_error(Primitive::add_rows, shape_string(m.shape()) + " with " + shape_string(v.shape()));
  }
  const std::size_t per_group = rows / groups;
  std::vector<real> out_v(m.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t g = r / per_group;
    for (std::size_t c = 0; c < cols; ++c) out_v[r * cols + c] = m[r * cols + c] + v[g * cols + c];
  }
  Tensor out(m.shape(), std::move(out_v));
  return finish(Primitive::add_rows, {m, v}, out,
                [m, v, out, rows, cols, per_group]() mutable {
                  auto g = out.grad();
                  if (m.requires_grad()) {
                    auto gm = m.mutable_grad();
                    for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
                  }
                  if (v.requires_grad()) {
                    auto gv = v.mutable_grad();
                    for (std::size_t r = 0; r < rows; ++r) {
                      const std::size_t grp = r / per_group;
                      for (std::size_t c = 0; c < cols; ++c) gv[grp * cols + c] += g[r * cols + c];
                    }
                  }
                });
}

/// M ⊕ v: adds v (length R) to every column of M (R×C).
inline Tensor add_columns(const Tensor& m, const Tensor& v) {
  using namespace detail;
  require_rank(Primitive::add_columns, m, 2);
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  if (v.size() != rows || v.rank() > 2 || (v.rank() == 2 && v.dim(1) != 1)) {
    shape_error(Primitive::add_columns,
                shape_string(m.shape()) + " with " + shape_string(v.shape()));
  }
  std::vector<real> out_v(m.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out_v[r * cols + c] = m[r * cols + c] + v[r];
  Tensor out(m.shape(), std::move(out_v));
  return finish(Primitive::add_columns, {m, v}, out, [m, v, out, rows, cols]() mutable {
    auto g = out.grad();
    if (m.requires_grad()) {
      auto gm = m.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
    }
    if (v.requires_grad()) {
      auto gv = v.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gv[r] += g[r * cols + c];
    }
  });
}

inline Tensor tanh(const Tensor& x) {
  std::vector<real> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(x[i]);
  Tensor out(x.shape(), std::move(v));
  return detail::finish(Primitive::tanh, {x}, out, [x, out]() mutable {
    auto g = out.grad();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (real(1) - out[i] * out[i]);
  });
}

inline real logistic(real x) {
  if (x >= 0) return real(1) / (real(1) + std::exp(-x));
  const real e = std::exp(x);
  return e / (real(1) + e);
}

inline Tensor sigmoid(const Tensor& x) {
  std::vector<real> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = logistic(x[i]);
  Tensor out(x.shape(), std::move(v));
  return detail::finish(Primitive::sigmoid, {x}, out, [x, out]() mutable {
    auto g = out.grad();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * out[i] * (real(1) - out[i]);
  });
}

/// Softmax along `axis` (default: last). Max-subtracted.
inline Tensor softmax(const Tensor& x, int axis = -1) {
  using namespace detail;
  if (x.rank() == 0) shape_error(Primitive::softmax, "scalar input");
  const std::size_t ax = axis < 0 ? x.rank() - 1 : static_cast<std::size_t>(axis);
  if (ax >= x.rank()) shape_error(Primitive::softmax, "axis out of range");
  const AxisSplit s = split_axis(x.shape(), ax);
  if (s.extent < 1) shape_error(Primitive::softmax, "empty softmax axis");
  std::vector<real> y(x.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      real hi = x[base];
      for (std::size_t j = 1; j < s.extent; ++j) hi = std::max(hi, x[base + j * s.inner]);
      real total = 0;
      for (std::size_t j = 0; j < s.extent; ++j) {
        const real e = std::exp(x[base + j * s.inner] - hi);
        y[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.extent; ++j) y[base + j * s.inner] /= total;
    }
  }
  Tensor out(x.shape(), std::move(y));
  return finish(Primitive::softmax, {x}, out, [x, out, s]() mutable {
    auto g = out.grad();
    auto gx = x.mutable_grad();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.extent * s.inner + in;
        real dot = 0;
        for (std::size_t j = 0; j < s.extent; ++j) {
          const std::size_t i = base + j * s.inner;
          dot += g[i] * out[i];
        }
        for (std::size_t j = 0; j < s.extent; ++j) {
          const std::size_t i = base + j * s.inner;
          gx[i] += out[i] * (g[i] - dot);
        }
      }
    }
  });
}

/// Maximum along `axis`; the axis is removed from the shape. Ties resolve to
/// the lowest index, which alone receives the gradient.
inline Tensor max(const Tensor& x, std::size_t axis) {
  using namespace detail;
  if (axis >= x.rank()) shape_error(Primitive::max, "axis out of range");
  const AxisSplit s = split_axis(x.shape(), axis);
  if (s.extent < 1) shape_error(Primitive::max, "empty axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<real> y(s.outer * s.inner);
  std::vector<std::size_t> winner(y.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      std::size_t best = base;
      for (std::size_t j = 1; j < s.extent; ++j) {
        if (x[base + j * s.inner] > x[best]) best = base + j * s.inner;
      }
      y[o * s.inner + in] = x[best];
      winner[o * s.inner + in] = best;
    }
  }
  Tensor out(std::move(out_shape), std::move(y));
  return finish(Primitive::max, {x}, out, [x, out, winner = std::move(winner)]() mutable {
    auto g = out.grad();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[winner[i]] += g[i];
  });
}

/// Concatenation along `axis`; all other extents must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  using namespace detail;
  if (parts.empty()) shape_error(Primitive::concat, "no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) shape_error(Primitive::concat, "axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) shape_error(Primitive::concat, "rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis && p.dim(i) != first[i]) {
        shape_error(Primitive::concat, shape_string(p.shape()) + " vs " + shape_string(first));
      }
    }
    out_shape[axis] += p.dim(axis);
  }
  const AxisSplit s = split_axis(out_shape, axis);
  std::vector<real> y(shape_size(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t run = p.dim(axis) * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(p.values().begin() + static_cast<std::ptrdiff_t>(o * run), run,
                  y.begin() + static_cast<std::ptrdiff_t>(o * s.extent * s.inner + offset * s.inner));
    }
    offset += p.dim(axis);
  }
  Tensor out(std::move(out_shape), std::move(y));
  return finish(Primitive::concat, parts, out, [parts, out, offsets, s, axis]() mutable {
    auto g = out.grad();
    for (std::size_t k = 0; k < parts.size(); ++k) {
      Tensor p = parts[k];
      if (!p.requires_grad()) continue;
      auto gp = p.mutable_grad();
      const std::size_t run = p.dim(axis) * s.inner;
      for (std::size_t o = 0; o < s.outer; ++o) {
        const std::size_t src = o * s.extent * s.inner + offsets[k] * s.inner;
        for (std::size_t i = 0; i < run; ++i) gp[o * run + i] += g[src + i];
      }
    }
  });
}

/// Selects rows of W (V×e) by index: the one-hot product W_eᵀ q for every id.
inline Tensor gather_rows(const Tensor& w, const std::vector<std::size_t>& ids) {
  using namespace detail;
  require_rank(Primitive::gather_rows, w, 2);
  const std::size_t n_rows = w.dim(0), cols = w.dim(1);
  std::vector<real> y(ids.size() * cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= n_rows) {
      shape_error(Primitive::gather_rows,
                  "row " + std::to_string(ids[i]) + " outside " + std::to_string(n_rows));
    }
    std::copy_n(w.values().begin() + static_cast<std::ptrdiff_t>(ids[i] * cols), cols,
                y.begin() + static_cast<std::ptrdiff_t>(i * cols));
  }
  Tensor out({ids.size(), cols}, std::move(y));
  return finish(Primitive::gather_rows, {w}, out, [w, out, ids, cols]() mutable {
    auto g = out.grad();
    auto gw = w.mutable_grad();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t c = 0; c < cols; ++c) gw[ids[i] * cols + c] += g[i * cols + c];
  });
}

inline Tensor scale(const Tensor& x, real factor) {
  std::vector<real> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] * factor;
  Tensor out(x.shape(), std::move(v));
  return detail::finish(Primitive::scale, {x}, out, [x, out, factor]() mutable {
    auto g = out.grad();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
  });
}

inline Tensor sum(const Tensor& x) {
  real total = 0;
  for (real v : x.values()) total += v;
  Tensor out = Tensor::scalar(total);
  return detail::finish(Primitive::sum, {x}, out, [x, out]() mutable {
    const real g = out.grad()[0];
    auto gx = x.mutable_grad();
    for (auto& v : gx) v += g;
  });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    detail::shape_error(Primitive::reshape,
                        shape_string(x.shape()) + " to " + shape_string(shape));
  }
  Tensor out(std::move(shape), x.data());
  return detail::finish(Primitive::reshape, {x}, out, [x, out]() mutable {
    auto g = out.grad();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

/// Per-group convex combination: for weights P (B×m) and rows V (B·m × d),
/// output row b is Σ_i P[b,i] · V[b·m + i].
inline Tensor weighted_rows(const Tensor& p, const Tensor& v) {
  using namespace detail;
  require_rank(Primitive::weighted_rows, p, 2);
  require_rank(Primitive::weighted_rows, v, 2);
  const std::size_t batch = p.dim(0), m = p.dim(1), d = v.dim(1);
  if (v.dim(0) != batch * m) {
    shape_error(Primitive::weighted_rows,
                shape_string(p.shape()) + " with " + shape_string(v.shape()));
  }
  Tensor out = Tensor::zeros({batch, d});
  auto y = out.mutable_values();
  for (std::size_t b = 0; b < batch; ++b) {
    view(y.subspan(b * d, d), 1, d).noalias() =
        view(p.values().subspan(b * m, m), 1, m) * view(v.values().subspan(b * m * d, m * d), m, d);
  }
  return finish(Primitive::weighted_rows, {p, v}, out, [p, v, out, batch, m, d]() mutable {
    auto g = out.grad();
    if (p.requires_grad()) {
      auto gp = p.mutable_grad();
      for (std::size_t b = 0; b < batch; ++b) {
        view(gp.subspan(b * m, m), 1, m).noalias() +=
            view(g.subspan(b * d, d), 1, d) * view(v.values().subspan(b * m * d, m * d), m, d).transpose();
      }
    }
    if (v.requires_grad()) {
      auto gv = v.mutable_grad();
      for (std::size_t b = 0; b < batch; ++b) {
        view(gv.subspan(b * m * d, m * d), m, d).noalias() +=
            view(p.values().subspan(b * m, m), 1, m).transpose() * view(g.subspan(b * d, d), 1, d);
      }
    }
  });
}

/// Mean over rows of −log softmax(logits)[target], from logits (B×A).
inline Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& targets) {
  using namespace detail;
  require_rank(Primitive::cross_entropy, logits, 2);
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (targets.size() != batch) shape_error(Primitive::cross_entropy, "target count mismatch");
  if (batch == 0 || classes == 0) shape_error(Primitive::cross_entropy, "empty logits");
  std::vector<real> probs(logits.size());
  real total = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (targets[b] >= classes) {
      throw ContractError("cross_entropy: target " + std::to_string(targets[b]) +
                          " outside " + std::to_string(classes) + " classes");
    }
    const real* row = logits.values().data() + b * classes;
    const real hi = *std::max_element(row, row + classes);
    real z = 0;
    for (std::size_t a = 0; a < classes; ++a) {
      probs[b * classes + a] = std::exp(row[a] - hi);
      z += probs[b * classes + a];
    }
    for (std::size_t a = 0; a < classes; ++a) probs[b * classes + a] /= z;
    total += std::log(z) + hi - row[targets[b]];
  }
  Tensor out = Tensor::scalar(total / static_cast<real>(batch));
  return finish(Primitive::cross_entropy, {logits}, out,
                [logits, out, targets, probs = std::move(probs), batch, classes]() mutable {
                  const real g = out.grad()[0] / static_cast<real>(batch);
                  auto gl = logits.mutable_grad();
                  for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t a = 0; a < classes; ++a) {
                      const real onehot = a == targets[b] ? real(1) : real(0);
                      gl[b * classes + a] += g * (probs[b * classes + a] - onehot);
                    }
                  }
                });
}

}  // namespace san::ops

#endif  // SAN_OPS_HPP
