// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation on dense real matrices. A Tape owns
// the computation graph; ops append nodes whose backward closures scatter
// gradients to their parents. Values are Eigen matrices, so a "tensor" here
// is always 2-D: token sequences are rows x features, scalars are 1x1, and
// complex matrices are embedded as real 2m x 2n block forms (see cblock.hpp).
//
// The engine is deliberately dynamic (one graph per forward pass) and
// single-threaded; node creation order is the topological order used for the
// reverse sweep.

#ifndef SEMIMO_AUTODIFF_HPP
#define SEMIMO_AUTODIFF_HPP

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "semimo/common.hpp"

namespace semimo::ag {

class Tape;

struct Expr {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Expr make(RMat value, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), RMat(), needs_grad, false, nullptr});
    return Expr{this, static_cast<int>(nodes_.size()) - 1};
  }

  Expr constant(RMat value) { return make(std::move(value), false); }
  Expr leaf(RMat value) { return make(std::move(value), true); }

  void set_backward(Expr e, std::function<void()> fn) { nodes_[e.id].backward = std::move(fn); }

  const RMat& val(Expr e) const { return nodes_[e.id].value; }
  bool needs(Expr e) const { return nodes_[e.id].needs_grad; }

  /// Gradient of the last backward() root w.r.t. e; zeros if e was off-path.
  const RMat& grad(Expr e) {
    Node& n = nodes_[e.id];
    if (!n.grad_touched) {
      n.grad = RMat::Zero(n.value.rows(), n.value.cols());
      n.grad_touched = true;
    }
    return n.grad;
  }

  void accumulate(Expr e, const RMat& g) {
    Node& n = nodes_[e.id];
    if (!n.grad_touched) {
      n.grad = g;
      n.grad_touched = true;
    } else {
      n.grad += g;
    }
  }

  /// Reverse sweep from a 1x1 root. Seeds d(root)/d(root) = 1 and walks the
  /// tape backwards; only nodes actually reached receive gradients.
  void backward(Expr root) {
    Node& r = nodes_[root.id];
    require(r.value.rows() == 1 && r.value.cols() == 1, "backward: root must be scalar (1x1)");
    if (!std::isfinite(r.value(0, 0))) throw NumericError("backward: non-finite loss");
    accumulate(root, RMat::Ones(1, 1));
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad_touched && n.backward) n.backward();
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

 private:
  struct Node {
    RMat value;
    RMat grad;
    bool needs_grad = false;
    bool grad_touched = false;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
};

namespace detail {
inline Tape& same_tape(Expr a, Expr b) {
  require(a.valid() && b.valid() && a.tape == b.tape, "autodiff: operands from different tapes");
  return *a.tape;
}
inline double stable_sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
}  // namespace detail

inline double scalar(Expr e) {
  const RMat& v = e.tape->val(e);
  require(v.size() == 1, "scalar: expression is not 1x1");
  return v(0, 0);
}

// ---- arithmetic ----

inline Expr add(Expr a, Expr b) {
  Tape& t = detail::same_tape(a, b);
  require(t.val(a).rows() == t.val(b).rows() && t.val(a).cols() == t.val(b).cols(),
          "add: shape mismatch");
  Expr out = t.make(t.val(a) + t.val(b), t.needs(a) || t.needs(b));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a, b] {
      const RMat& g = t.grad(out);
      if (t.needs(a)) t.accumulate(a, g);
      if (t.needs(b)) t.accumulate(b, g);
    });
  return out;
}

inline Expr sub(Expr a, Expr b) {
  Tape& t = detail::same_tape(a, b);
  require(t.val(a).rows() == t.val(b).rows() && t.val(a).cols() == t.val(b).cols(),
          "sub: shape mismatch");
  Expr out = t.make(t.val(a) - t.val(b), t.needs(a) || t.needs(b));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a, b] {
      const RMat& g = t.grad(out);
      if (t.needs(a)) t.accumulate(a, g);
      if (t.needs(b)) t.accumulate(b, -g);
    });
  return out;
}

inline Expr neg(Expr a) {
  Tape& t = *a.tape;
  Expr out = t.make(-t.val(a), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a] { t.accumulate(a, -t.grad(out)); });
  return out;
}

inline Expr scale(Expr a, double c) {
  Tape& t = *a.tape;
  Expr out = t.make(t.val(a) * c, t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a, c] { t.accumulate(a, t.grad(out) * c); });
  return out;
}

inline Expr add_scalar(Expr a, double c) {
  Tape& t = *a.tape;
  Expr out = t.make(t.val(a).array() + c, t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a] { t.accumulate(a, t.grad(out)); });
  return out;
}

inline Expr mul(Expr a, Expr b) {
  Tape& t = detail::same_tape(a, b);
  require(t.val(a).rows() == t.val(b).rows() && t.val(a).cols() == t.val(b).cols(),
          "mul: shape mismatch");
  Expr out = t.make(t.val(a).cwiseProduct(t.val(b)), t.needs(a) || t.needs(b));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a, b] {
      const RMat& g = t.grad(out);
      if (t.needs(a)) t.accumulate(a, g.cwiseProduct(t.val(b)));
      if (t.needs(b)) t.accumulate(b, g.cwiseProduct(t.val(a)));
    });
  return out;
}

/// Broadcast a 1 x d row vector over all rows of a (n x d).
inline Expr add_rowvec(Expr a, Expr r) {
  Tape& t = detail::same_tape(a, r);
  require(t.val(r).rows() == 1 && t.val(r).cols() == t.val(a).cols(),
          "add_rowvec: need 1 x cols(a) row vector");
  RMat v = t.val(a);
  v.rowwise() += t.val(r).row(0);
  Expr out = t.make(std::move(v), t.needs(a) || t.needs(r));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a, r] {
      const RMat& g = t.grad(out);
      if (t.needs(a)) t.accumulate(a, g);
      if (t.needs(r)) t.accumulate(r, g.colwise().sum());
    });
  return out;
}

inline Expr mul_rowvec(Expr a, Expr r) {
  Tape& t = detail::same_tape(a, r);
  require(t.val(r).rows() == 1 && t.val(r).cols() == t.val(a).cols(),
          "mul_rowvec: need 1 x cols(a) row vector");
  RMat v = t.val(a).array().rowwise() * t.val(r).row(0).array();
  Expr out = t.make(std::move(v), t.needs(a) || t.needs(r));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a, r] {
      const RMat& g = t.grad(out);
      if (t.needs(a)) t.accumulate(a, g.array().rowwise() * t.val(r).row(0).array());
      if (t.needs(r)) t.accumulate(r, g.cwiseProduct(t.val(a)).colwise().sum());
    });
  return out;
}

/// Multiply by a 1x1 expression (broadcast scalar with gradient).
inline Expr mul_bscalar(Expr a, Expr s) {
  Tape& t = detail::same_tape(a, s);
  require(t.val(s).size() == 1, "mul_bscalar: s must be 1x1");
  const double sv = t.val(s)(0, 0);
  Expr out = t.make(t.val(a) * sv, t.needs(a) || t.needs(s));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a, s, sv] {
      const RMat& g = t.grad(out);
      if (t.needs(a)) t.accumulate(a, g * sv);
      if (t.needs(s)) {
        RMat gs(1, 1);
        gs(0, 0) = g.cwiseProduct(t.val(a)).sum();
        t.accumulate(s, gs);
      }
    });
  return out;
}

inline Expr matmul(Expr a, Expr b) {
  Tape& t = detail::same_tape(a, b);
  require(t.val(a).cols() == t.val(b).rows(), "matmul: inner dimensions disagree");
  Expr out = t.make(t.val(a) * t.val(b), t.needs(a) || t.needs(b));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a, b] {
      const RMat& g = t.grad(out);
      if (t.needs(a)) t.accumulate(a, g * t.val(b).transpose());
      if (t.needs(b)) t.accumulate(b, t.val(a).transpose() * g);
    });
  return out;
}

inline Expr transpose(Expr a) {
  Tape& t = *a.tape;
  Expr out = t.make(t.val(a).transpose(), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a] { t.accumulate(a, t.grad(out).transpose()); });
  return out;
}

/// Inverse of a square matrix; d(A^-1) pullback is -A^-T G A^-T.
inline Expr inverse(Expr a) {
  Tape& t = *a.tape;
  require(t.val(a).rows() == t.val(a).cols(), "inverse: matrix must be square");
  RMat inv = t.val(a).partialPivLu().inverse();
  if (!inv.allFinite()) throw NumericError("inverse: singular matrix");
  Expr out = t.make(std::move(inv), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a] {
      const RMat& vinv = t.val(out);
      t.accumulate(a, -(vinv.transpose() * t.grad(out) * vinv.transpose()));
    });
  return out;
}

// ---- elementwise nonlinearities ----

inline Expr relu(Expr a) {
  Tape& t = *a.tape;
  Expr out = t.make(t.val(a).cwiseMax(0.0), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a] {
      RMat mask = (t.val(a).array() > 0.0).cast<double>();
      t.accumulate(a, t.grad(out).cwiseProduct(mask));
    });
  return out;
}

inline Expr sigmoid(Expr a) {
  Tape& t = *a.tape;
  RMat v = t.val(a).unaryExpr([](double x) { return detail::stable_sigmoid(x); });
  Expr out = t.make(std::move(v), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a] {
      const RMat& s = t.val(out);
      t.accumulate(a, t.grad(out).cwiseProduct(s.cwiseProduct(RMat::Ones(s.rows(), s.cols()) - s)));
    });
  return out;
}

inline Expr softplus(Expr a) {
  Tape& t = *a.tape;
  RMat v = t.val(a).unaryExpr(
      [](double x) { return x > 30.0 ? x : std::log1p(std::exp(std::min(x, 30.0))); });
  Expr out = t.make(std::move(v), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a] {
      RMat s = t.val(a).unaryExpr([](double x) { return detail::stable_sigmoid(x); });
      t.accumulate(a, t.grad(out).cwiseProduct(s));
    });
  return out;
}

inline Expr tanh_(Expr a) {
  Tape& t = *a.tape;
  RMat v = t.val(a).array().tanh();
  Expr out = t.make(std::move(v), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a] {
      const RMat& v2 = t.val(out);
      RMat dm = RMat::Ones(v2.rows(), v2.cols()) - v2.cwiseProduct(v2);
      t.accumulate(a, t.grad(out).cwiseProduct(dm));
    });
  return out;
}

inline Expr exp_(Expr a) {
  Tape& t = *a.tape;
  Expr out = t.make(t.val(a).array().exp(), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a] { t.accumulate(a, t.grad(out).cwiseProduct(t.val(out))); });
  return out;
}

/// Natural log; caller guarantees strictly positive input (clamp first).
inline Expr log_(Expr a) {
  Tape& t = *a.tape;
  Expr out = t.make(t.val(a).array().log(), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a] {
      t.accumulate(a, t.grad(out).cwiseQuotient(t.val(a)));
    });
  return out;
}

inline Expr sqrt_(Expr a) {
  Tape& t = *a.tape;
  Expr out = t.make(t.val(a).array().sqrt(), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a] {
      RMat d = 0.5 * t.val(out).cwiseInverse();
      t.accumulate(a, t.grad(out).cwiseProduct(d));
    });
  return out;
}

inline Expr square(Expr a) {
  Tape& t = *a.tape;
  Expr out = t.make(t.val(a).cwiseProduct(t.val(a)), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a] {
      t.accumulate(a, 2.0 * t.grad(out).cwiseProduct(t.val(a)));
    });
  return out;
}

/// Clamp with pass-through gradient strictly inside (lo, hi).
inline Expr clamp(Expr a, double lo, double hi) {
  Tape& t = *a.tape;
  Expr out = t.make(t.val(a).cwiseMax(lo).cwiseMin(hi), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a, lo, hi] {
      RMat mask = ((t.val(a).array() > lo) && (t.val(a).array() < hi)).cast<double>();
      t.accumulate(a, t.grad(out).cwiseProduct(mask));
    });
  return out;
}

// ---- row-wise structured ops ----

inline Expr softmax_rows(Expr a) {
  Tape& t = *a.tape;
  RMat v = t.val(a);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    double mx = v.row(i).maxCoeff();
    v.row(i) = (v.row(i).array() - mx).exp();
    v.row(i) /= v.row(i).sum();
  }
  Expr out = t.make(std::move(v), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a] {
      const RMat& s = t.val(out);
      const RMat& g = t.grad(out);
      RMat ga(s.rows(), s.cols());
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        double dot = g.row(i).cwiseProduct(s.row(i)).sum();
        ga.row(i) = s.row(i).array() * (g.row(i).array() - dot);
      }
      t.accumulate(a, ga);
    });
  return out;
}

/// Per-row standardization (x - mean) / sqrt(var + eps); no affine part.
inline Expr layernorm_rows(Expr a, double eps = 1e-5) {
  Tape& t = *a.tape;
  const RMat& x = t.val(a);
  const Eigen::Index n = x.rows(), d = x.cols();
  RMat v(n, d);
  RVec inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mu = x.row(i).mean();
    double var = (x.row(i).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_std(i) = is;
    v.row(i) = (x.row(i).array() - mu) * is;
  }
  Expr out = t.make(std::move(v), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a, inv_std] {
      const RMat& xhat = t.val(out);
      const RMat& g = t.grad(out);
      const Eigen::Index d2 = xhat.cols();
      RMat ga(xhat.rows(), d2);
      for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
        double gmean = g.row(i).mean();
        double gx = g.row(i).cwiseProduct(xhat.row(i)).mean();
        ga.row(i) = inv_std(i) * (g.row(i).array() - gmean - xhat.row(i).array() * gx);
      }
      t.accumulate(a, ga);
    });
  return out;
}

// ---- shape ops ----

inline Expr slice(Expr a, int r0, int c0, int rows, int cols) {
  Tape& t = *a.tape;
  require(r0 >= 0 && c0 >= 0 && r0 + rows <= t.val(a).rows() && c0 + cols <= t.val(a).cols(),
          "slice: block out of range");
  Expr out = t.make(t.val(a).block(r0, c0, rows, cols), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a, r0, c0, rows, cols] {
      RMat ga = RMat::Zero(t.val(a).rows(), t.val(a).cols());
      ga.block(r0, c0, rows, cols) = t.grad(out);
      t.accumulate(a, ga);
    });
  return out;
}

inline Expr slice_rows(Expr a, int r0, int rows) {
  return slice(a, r0, 0, rows, static_cast<int>(a.tape->val(a).cols()));
}

inline Expr slice_cols(Expr a, int c0, int cols) {
  return slice(a, 0, c0, static_cast<int>(a.tape->val(a).rows()), cols);
}

inline Expr concat_rows(const std::vector<Expr>& parts) {
  require(!parts.empty(), "concat_rows: empty list");
  Tape& t = *parts.front().tape;
  Eigen::Index total = 0;
  const Eigen::Index cols = t.val(parts.front()).cols();
  bool ng = false;
  for (Expr p : parts) {
    require(p.tape == &t, "concat_rows: mixed tapes");
    require(t.val(p).cols() == cols, "concat_rows: column mismatch");
    total += t.val(p).rows();
    ng = ng || t.needs(p);
  }
  RMat v(total, cols);
  Eigen::Index r = 0;
  for (Expr p : parts) {
    v.middleRows(r, t.val(p).rows()) = t.val(p);
    r += t.val(p).rows();
  }
  Expr out = t.make(std::move(v), ng);
  if (ng) {
    std::vector<Expr> ps = parts;
    t.set_backward(out, [&t, out, ps] {
      const RMat& g = t.grad(out);
      Eigen::Index r2 = 0;
      for (Expr p : ps) {
        if (t.needs(p)) t.accumulate(p, g.middleRows(r2, t.val(p).rows()));
        r2 += t.val(p).rows();
      }
    });
  }
  return out;
}

inline Expr concat_cols(const std::vector<Expr>& parts) {
  require(!parts.empty(), "concat_cols: empty list");
  Tape& t = *parts.front().tape;
  Eigen::Index total = 0;
  const Eigen::Index rows = t.val(parts.front()).rows();
  bool ng = false;
  for (Expr p : parts) {
    require(p.tape == &t, "concat_cols: mixed tapes");
    require(t.val(p).rows() == rows, "concat_cols: row mismatch");
    total += t.val(p).cols();
    ng = ng || t.needs(p);
  }
  RMat v(rows, total);
  Eigen::Index c = 0;
  for (Expr p : parts) {
    v.middleCols(c, t.val(p).cols()) = t.val(p);
    c += t.val(p).cols();
  }
  Expr out = t.make(std::move(v), ng);
  if (ng) {
    std::vector<Expr> ps = parts;
    t.set_backward(out, [&t, out, ps] {
      const RMat& g = t.grad(out);
      Eigen::Index c2 = 0;
      for (Expr p : ps) {
        if (t.needs(p)) t.accumulate(p, g.middleCols(c2, t.val(p).cols()));
        c2 += t.val(p).cols();
      }
    });
  }
  return out;
}

/// out.row(i) = a.row(idx[i]); indices may repeat (gradient scatter-adds).
inline Expr gather_rows(Expr a, std::vector<int> idx) {
  Tape& t = *a.tape;
  const RMat& x = t.val(a);
  RMat v(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < x.rows(), "gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  }
  Expr out = t.make(std::move(v), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a, idx] {
      const RMat& g = t.grad(out);
      RMat ga = RMat::Zero(t.val(a).rows(), t.val(a).cols());
      for (std::size_t i = 0; i < idx.size(); ++i)
        ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
      t.accumulate(a, ga);
    });
  return out;
}

/// Row-major reshape (tokens stay contiguous along rows).
inline Expr reshape_rm(Expr a, int rows, int cols) {
  Tape& t = *a.tape;
  const RMat& x = t.val(a);
  require(static_cast<Eigen::Index>(rows) * cols == x.size(), "reshape_rm: element count mismatch");
  const int ac = static_cast<int>(x.cols());
  RMat v(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      int p = i * cols + j;
      v(i, j) = x(p / ac, p % ac);
    }
  Expr out = t.make(std::move(v), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a, rows, cols, ac] {
      const RMat& g = t.grad(out);
      RMat ga(t.val(a).rows(), t.val(a).cols());
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
          int p = i * cols + j;
          ga(p / ac, p % ac) = g(i, j);
        }
      t.accumulate(a, ga);
    });
  return out;
}

// ---- reductions ----

inline Expr sum_all(Expr a) {
  Tape& t = *a.tape;
  RMat v(1, 1);
  v(0, 0) = t.val(a).sum();
  Expr out = t.make(std::move(v), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a] {
      double g = t.grad(out)(0, 0);
      t.accumulate(a, RMat::Constant(t.val(a).rows(), t.val(a).cols(), g));
    });
  return out;
}

inline Expr mean_all(Expr a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.tape->val(a).size()));
}

/// Column means: n x d -> 1 x d.
inline Expr mean_rows(Expr a) {
  Tape& t = *a.tape;
  const double n = static_cast<double>(t.val(a).rows());
  Expr out = t.make(t.val(a).colwise().mean(), t.needs(a));
  if (t.needs(out))
    t.set_backward(out, [&t, out, a, n] {
      const RMat& g = t.grad(out);
      RMat ga(t.val(a).rows(), t.val(a).cols());
      for (Eigen::Index i = 0; i < ga.rows(); ++i) ga.row(i) = g.row(0) / n;
      t.accumulate(a, ga);
    });
  return out;
}

}  // namespace semimo::ag

#endif  // SEMIMO_AUTODIFF_HPP
