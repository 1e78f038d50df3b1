#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "htan/ops.hpp"

namespace htan::apl {

/// Basis biases β (length M) of an adaptive piecewise-linear activation.
class APLBasis {
 public:
  explicit APLBasis(std::vector<double> beta);
  std::size_t size() const noexcept { return beta_.size(); }
  std::span<const double> values() const noexcept { return beta_; }
  Tensor as_row() const { return Tensor::row(beta_); }

 private:
  std::vector<double> beta_;
};

/// Coordinates α (length M) of one activation function over an APLBasis.
class APLCoordinates {
 public:
  explicit APLCoordinates(std::vector<double> alpha);
  std::size_t size() const noexcept { return alpha_.size(); }
  std::span<const double> values() const noexcept { return alpha_; }
  Tensor as_row() const { return Tensor::row(alpha_); }

 private:
  std::vector<double> alpha_;
};

/// Jitter added to the raw Gram matrix: `kGramJitter · trace(G) / M` on the diagonal.
inline constexpr double kGramJitter = 1e-6;
/// Absolute per-entry tolerance required from the quadrature.
inline constexpr double kGramTolerance = 1e-8;
/// Integration runs from `min(β, 0) - kGramMargin`.
inline constexpr double kGramMargin = 10.0;

/// y = ReLU(x) + Σ_m α_m ReLU(β_m − x), elementwise over x.
double apl_value(double x, std::span<const double> alpha, std::span<const double> beta);

/// Differentiable APL activation. `alpha` and `beta` are length-M vectors
/// (rank 1 or 1×M); `x` may have any shape.
Var apl_apply(Var x, Var alpha, Var beta);

/// Raw Gram entry ∫ ReLU(β_i − x) ReLU(β_j − x) N(x) dx by adaptive
/// Gauss–Kronrod quadrature. Throws NumericalError on non-convergence.
double gram_entry(double beta_i, double beta_j, double lower);

/// Gram matrix of the ReLU basis under a standard-normal input, made strictly
/// positive definite by the trace-scaled jitter.
Tensor gaussian_gram(const APLBasis& beta);
/// Differentiable variant; the backward pass differentiates under the
/// integral sign, again by quadrature.
Var gaussian_gram(Var beta);

/// (α¹−α²)ᵀ M (α¹−α²) as a shape-{1} tensor.
Var mahalanobis_sq(Var a1, Var a2, Var metric);
double mahalanobis_sq(const APLCoordinates& a1, const APLCoordinates& a2, const Tensor& metric);

/// T×T matrix of pairwise squared distances; symmetric with an exactly zero diagonal.
Var distance_matrix(const std::vector<Var>& alphas, Var metric);

}  // namespace htan::apl
