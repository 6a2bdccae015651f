#pragma once

#include <span>
#include <vector>

#include "gpode/autodiff/tape.hpp"

// Differentiable primitives. Every op records on the tape of its tracked
// arguments and returns an untracked tensor when none are tracked.
namespace gpode::ad {

// Elementwise. Shapes must match, or one side must hold a single value.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor shift(const Tensor& a, double c);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
// log(1 + e^x), evaluated stably.
Tensor softplus(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Linear algebra on rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// Lower Cholesky factor of a symmetric positive-definite matrix (lower triangle read).
Tensor cholesky(const Tensor& a);
// X with L X = B (L lower triangular).
Tensor solve_lower(const Tensor& l, const Tensor& b);
// X with L^T X = B (L lower triangular).
Tensor solve_lower_transposed(const Tensor& l, const Tensor& b);
// A + s I for a square A and a single-valued s.
Tensor add_diag(const Tensor& a, const Tensor& s);
// Main diagonal of a square matrix as a vector.
Tensor diag(const Tensor& a);

// Structure.
Tensor reshape(const Tensor& a, Shape shape);
// `shape.size()` consecutive values starting at flat `offset`.
Tensor flat_slice(const Tensor& a, std::size_t offset, Shape shape);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
inline Tensor row(const Tensor& a, std::size_t r) { return slice_rows(a, r, 1); }
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
// a[i, j] * v[j] for a rows x n and v holding n values.
Tensor scale_cols(const Tensor& a, const Tensor& v);

// Row-wise linear combination: out[b, :] = base[b, :] + sum_s coeff[b, s] * terms[s][b, :].
// Coefficients are constants. Used for Runge-Kutta stage updates.
Tensor row_axpy(const Tensor& base, std::span<const Tensor> terms, std::span<const double> coeff);

// Batched D x D triangular factors stored one per row as D*D row-major values.
// Raw values below the diagonal pass through, the diagonal goes through softplus,
// and the strict upper triangle is zeroed.
Tensor tril_softplus_blocks(const Tensor& raw, std::size_t d);
// Diagonal-only variant: raw holds D values per row.
Tensor diag_softplus_blocks(const Tensor& raw);
// out[b, :] = L_b * v[b, :] for blocks L_b (rows x D*D) and v (rows x D).
Tensor block_matvec(const Tensor& blocks, const Tensor& v);
// Diagonals of each block: rows x D.
Tensor block_diag(const Tensor& blocks, std::size_t d);

}  // namespace gpode::ad
