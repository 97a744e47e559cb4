#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "subln/tensor.hpp"

// Differentiable primitives. Each one computes its result eagerly and, when an
// input requires a gradient, registers its backward rule on the given tape.
// Only two broadcasting forms exist: matrix-matrix products and same-shape
// elementwise arithmetic.
namespace subln::ops {

inline constexpr double kDefaultLayerNormEps = 1e-5;

// a[m x k] . b[k x n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// x[m x k] . w[n x k]^T, i.e. W applied to every row of x.
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w);
Tensor transpose(Tape& tape, const Tensor& a);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double c);
Tensor sum(Tape& tape, const Tensor& a);
// Scalar view of one matrix entry.
Tensor pick(Tape& tape, const Tensor& a, std::size_t row, std::size_t col);

// Normalizes every vector along the last dimension to zero mean and unit
// population variance: (x - mean) / sqrt(var + eps). No affine parameters.
// Constant vectors map to zeros when eps > 0 and throw DivisionHazard when
// eps == 0.
Tensor layer_norm(Tape& tape, const Tensor& x, double eps = kDefaultLayerNormEps);

// Exact GELU, x * Phi(x).
Tensor gelu(Tape& tape, const Tensor& x);

// Row-wise softmax of a matrix. With `causal`, entry (i, j) for j > i is
// masked out (probability exactly 0).
Tensor softmax_rows(Tape& tape, const Tensor& x, bool causal = false);

// Rows of `table` selected by `ids`.
Tensor embed(Tape& tape, const Tensor& table, std::span<const std::size_t> ids);

Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);

// -log softmax(logits)[label] for a single row of logits ([V] or [1 x V]).
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::size_t label);

// Sum over rows of -log softmax(logits[t])[targets[t]]. Rows whose target is
// negative are skipped.
Tensor cross_entropy_rows(Tape& tape, const Tensor& logits, std::span<const long> targets);

}  // namespace subln::ops
