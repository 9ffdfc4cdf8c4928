#pragma once

#include <span>
#include <vector>

#include "dgpo/numerics/diff_array.hpp"

// Differentiable ops. Unless noted, 2-D operands are [rows, cols] row-major
// and "last axis" reductions run along cols. Shape violations throw
// ShapeError naming the op.
namespace dgpo::numerics {

DiffArray matmul(const DiffArray& a, const DiffArray& b);
DiffArray add(const DiffArray& a, const DiffArray& b);
DiffArray sub(const DiffArray& a, const DiffArray& b);
DiffArray mul(const DiffArray& a, const DiffArray& b);
// [m,n] + bias[n] broadcast over rows.
DiffArray add_bias(const DiffArray& a, const DiffArray& bias);
DiffArray scale(const DiffArray& a, double s);
DiffArray add_scalar(const DiffArray& a, double s);

DiffArray exp(const DiffArray& a);
DiffArray log(const DiffArray& a);
DiffArray tanh(const DiffArray& a);
DiffArray gelu(const DiffArray& a);
DiffArray square(const DiffArray& a);
// Gradient flows only where lo < x < hi.
DiffArray clamp(const DiffArray& a, double lo, double hi);
// Elementwise min; ties send the gradient to `a`.
DiffArray minimum(const DiffArray& a, const DiffArray& b);

DiffArray softmax(const DiffArray& a);
DiffArray log_softmax(const DiffArray& a);
DiffArray layer_norm(const DiffArray& x, const DiffArray& gain, const DiffArray& bias,
                     double eps = 1e-5);

// table[V,d], ids in [0,V) -> [len(ids), d]
DiffArray embedding(const DiffArray& table, std::span<const int> ids);
// a[m,n] -> a[indices, :]
DiffArray select_rows(const DiffArray& a, std::span<const std::size_t> indices);
// a[m,n] -> [m] with out[i] = a[i, cols[i]]
DiffArray pick(const DiffArray& a, std::span<const int> cols);
// Per-row softmax cross-entropy: logits[m,n], targets[m] -> [m]
DiffArray cross_entropy(const DiffArray& logits, std::span<const int> targets);
// Causal multi-head attention over q,k,v of shape [T,d]; heads divides d.
DiffArray causal_attention(const DiffArray& q, const DiffArray& k, const DiffArray& v,
                           std::size_t heads);

DiffArray reshape(const DiffArray& a, Shape shape);
DiffArray row_sum(const DiffArray& a);
DiffArray sum(const DiffArray& a);
DiffArray mean(const DiffArray& a);
// sum_i a[i] * w[i] with constant weights.
DiffArray weighted_sum(const DiffArray& a, std::span<const double> weights);

}  // namespace dgpo::numerics
