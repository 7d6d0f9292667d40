// SPDX-License-Identifier: Apache-2.0
//
// Complex linear algebra inside the autodiff tape via the real block
// embedding: an m x n complex matrix M = R + jI is carried as the
// 2m x 2n real matrix [[R, -I], [I, R]]. The embedding is a ring
// homomorphism, so matmul, transpose (= adjoint) and inverse of block
// forms are exactly the complex operations, and gradients flow through
// the ordinary real-matrix ops.

#ifndef SEMIMO_CBLOCK_HPP
#define SEMIMO_CBLOCK_HPP

#include "semimo/autodiff.hpp"
#include "semimo/common.hpp"

namespace semimo::ag {

struct CExpr {
  Expr e;        // 2*rows x 2*cols block form
  int rows = 0;  // logical complex dims
  int cols = 0;
};

inline RMat to_block(const CMat& m) {
  const int r = static_cast<int>(m.rows()), c = static_cast<int>(m.cols());
  RMat b(2 * r, 2 * c);
  b.topLeftCorner(r, c) = m.real();
  b.topRightCorner(r, c) = -m.imag();
  b.bottomLeftCorner(r, c) = m.imag();
  b.bottomRightCorner(r, c) = m.real();
  return b;
}

inline CMat from_block(const RMat& b) {
  const int r = static_cast<int>(b.rows()) / 2, c = static_cast<int>(b.cols()) / 2;
  CMat m(r, c);
  m.real() = b.topLeftCorner(r, c);
  m.imag() = b.bottomLeftCorner(r, c);
  return m;
}

inline CExpr c_const(Tape& t, const CMat& m) {
  return {t.constant(to_block(m)), static_cast<int>(m.rows()), static_cast<int>(m.cols())};
}

inline CMat c_value(const CExpr& a) { return from_block(a.e.tape->val(a.e)); }

/// Assemble the block form from real/imag part expressions (each r x c).
inline CExpr c_from_parts(Expr re, Expr im) {
  Tape& t = *re.tape;
  const int r = static_cast<int>(t.val(re).rows());
  const int c = static_cast<int>(t.val(re).cols());
  require(t.val(im).rows() == r && t.val(im).cols() == c, "c_from_parts: shape mismatch");
  Expr top = concat_cols({re, neg(im)});
  Expr bot = concat_cols({im, re});
  return {concat_rows({top, bot}), r, c};
}

inline Expr c_re(const CExpr& a) { return slice(a.e, 0, 0, a.rows, a.cols); }
inline Expr c_im(const CExpr& a) { return slice(a.e, a.rows, 0, a.rows, a.cols); }

inline CExpr c_add(const CExpr& a, const CExpr& b) {
  require(a.rows == b.rows && a.cols == b.cols, "c_add: shape mismatch");
  return {add(a.e, b.e), a.rows, a.cols};
}

inline CExpr c_sub(const CExpr& a, const CExpr& b) {
  require(a.rows == b.rows && a.cols == b.cols, "c_sub: shape mismatch");
  return {sub(a.e, b.e), a.rows, a.cols};
}

inline CExpr c_matmul(const CExpr& a, const CExpr& b) {
  require(a.cols == b.rows, "c_matmul: inner dims disagree");
  return {matmul(a.e, b.e), a.rows, b.cols};
}

inline CExpr c_adjoint(const CExpr& a) { return {transpose(a.e), a.cols, a.rows}; }

inline CExpr c_inverse(const CExpr& a) {
  require(a.rows == a.cols, "c_inverse: matrix must be square");
  return {inverse(a.e), a.rows, a.cols};
}

inline CExpr c_scale(const CExpr& a, double s) { return {scale(a.e, s), a.rows, a.cols}; }

/// Multiply by a real 1x1 expression.
inline CExpr c_scale_real(const CExpr& a, Expr s) { return {mul_bscalar(a.e, s), a.rows, a.cols}; }

/// |z|^2 of a 1x1 complex expression, as a real 1x1 expression.
inline Expr c_abs2(const CExpr& z) {
  require(z.rows == 1 && z.cols == 1, "c_abs2: need a complex scalar");
  Expr re = slice(z.e, 0, 0, 1, 1);
  Expr im = slice(z.e, 1, 0, 1, 1);
  return add(square(re), square(im));
}

/// Squared Frobenius norm; the block form double-counts every entry.
inline Expr c_fro2(const CExpr& a) { return scale(sum_all(square(a.e)), 0.5); }

/// Real part of a 1x1 complex expression.
inline Expr c_real_scalar(const CExpr& z) {
  require(z.rows == 1 && z.cols == 1, "c_real_scalar: need a complex scalar");
  return slice(z.e, 0, 0, 1, 1);
}

}  // namespace semimo::ag

#endif  // SEMIMO_CBLOCK_HPP
