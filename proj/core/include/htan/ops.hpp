#pragma once

#include <cstddef>
#include <vector>

#include "htan/tape.hpp"

/// Differentiable primitives.
///
/// Shape rules (no implicit broadcasting):
///  - elementwise binary ops need identical shapes;
///  - matrix ops need rank-2 operands; `as_matrix` lifts a vector to 1×n;
///  - the `*_rowvec` / `*_colvec` ops are the only broadcasting primitives.
/// Reductions sum left to right in storage order.
namespace htan {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var maximum(Var a, Var b);  // ties route the gradient to `a`
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);

Var matmul(Var a, Var b);     // (m×k)(k×n)
Var matmul_nt(Var a, Var b);  // (m×k)(n×k)ᵀ
Var transpose(Var a);
Var symmetrize(Var a);  // (A + Aᵀ)/2

Var as_matrix(Var a);  // rank-1 n → 1×n, rank-2 unchanged
Var reshape(Var a, Shape shape);
Var concat(const std::vector<Var>& parts);  // along the last axis
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var gather(Var a, const std::vector<std::size_t>& flat_indices);  // → rank-1

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);  // subgradient 0 at 0
Var exp(Var a);
Var log(Var a);
Var abs(Var a);  // subgradient 0 at 0

Var sum(Var a);   // → shape {1}
Var mean(Var a);  // → shape {1}
Var sum_rows(Var a);  // m×n → m×1
Var logsumexp(Var a);  // over all entries → shape {1}

Var diag_embed(Var v);  // n or 1×n → n×n
Var add_rowvec(Var a, Var row);  // m×n + 1×n
Var mul_rowvec(Var a, Var row);  // m×n ⊙ 1×n
Var mul_colvec(Var a, Var col);  // m×n ⊙ m×1

Var softmax(Var a);  // row-wise over m×n
/// Mean over rows of −log softmax(logits)[row, target[row]].
Var softmax_cross_entropy(Var logits, const std::vector<int>& targets);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator-(Var a) { return neg(a); }

// Plain (tape-free) kernels shared with other modules.
namespace kernels {
/// C = A·B with fixed summation order.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
}  // namespace kernels

}  // namespace htan
