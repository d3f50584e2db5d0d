#pragma once

// Differentiable primitives. Every function records one node on the tape of
// its first argument; inputs are never modified.

#include <cstddef>

#include "blurcast/tape.hpp"
#include "blurcast/tensor.hpp"

namespace blurcast::ad {

// Element-wise binary ops. `b` broadcasts into `a`'s shape when its
// right-aligned dims are equal to a's or 1 (a [n x d] plus a [d] bias, a
// [n x 1] column, or a scalar). The operands are swapped for add and mul
// when only `a` is the broadcast side.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var neg(Var a);
Var exp(Var a);
/// Throws DomainError on entries <= 0.
Var log(Var a);
Var square(Var a);
/// Exact (erf-based) GELU.
Var gelu(Var a);

Var sum(Var a);
Var mean(Var a);
/// Reduces one axis; the axis is removed from the result shape.
Var sum(Var a, std::size_t axis);

/// Max-subtracted softmax along `axis`.
Var softmax(Var a, std::size_t axis);
/// Normalizes over the last dimension with 1e-5 inside the square root.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

Var reshape(Var a, Shape shape);
Var transpose(Var a);
Var concat_cols(Var a, Var b);
Var diag_part(Var a);
Var diag_embed(Var v);
/// Same value, no gradient flow into `a`.
Var detach(Var a);

Var matmul(Var a, Var b);

/// Lower Cholesky factor of (A + A^T)/2. Throws NotPositiveDefinite with
/// the index of the first non-positive pivot.
Var cholesky(Var a);
/// Solves L X = B (or L^T X = B with transpose=true) reading only the lower
/// triangle of L. Throws DomainError on a zero diagonal.
Var triangular_solve(Var l, Var b, bool transpose = false);

/// Scaled dot-product attention split across `heads` column blocks:
/// q [n x d], k and v [m x d] -> [n x d]. d must be divisible by heads.
Var multi_head_attention(Var q, Var k, Var v, std::size_t heads);

}  // namespace blurcast::ad

namespace blurcast::linalg {

Tensor cholesky_lower(const Tensor& a);
/// X with L X = B (lower triangle of L used).
Tensor solve_lower(const Tensor& l, const Tensor& b);
/// X with L^T X = B.
Tensor solve_lower_transposed(const Tensor& l, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace blurcast::linalg
