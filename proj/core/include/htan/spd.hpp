#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "htan/ops.hpp"
#include "htan/random.hpp"

/// Layers on the manifold of symmetric positive-definite matrices, modulated
/// by the activation basis vector β, plus the Stiefel-constrained optimizer
/// step used for their weights.
namespace htan::spd {

/// Smallest eigenvalue admitted by `spd_project` and by the SPD invariant.
inline constexpr double kEigenFloor = 1e-10;
/// Offset added to every ReEig threshold.
inline constexpr double kThresholdFloor = 1e-8;
/// Eigenvalue gaps below this are treated as degenerate in the eig backward.
inline constexpr double kDegenerateGap = 1e-10;
/// Tolerance on ‖WWᵀ − I‖∞ after a Stiefel step.
inline constexpr double kStiefelTolerance = 1e-6;

/// Eigenvectors (columns of `vectors`) and eigenvalues sorted descending.
struct EigPair {
  Tensor vectors;  // M×M
  Tensor values;   // length M
};

/// Symmetric eigendecomposition of (X + Xᵀ)/2. Throws DomainError on
/// non-finite input.
EigPair sym_eig(const Tensor& x);

struct EigVars {
  Var vectors;  // M×M
  Var values;   // 1×M
};

/// Differentiable eigendecomposition. The backward pass returns
/// sym(U (diag(ḡ_λ) + F ∘ (Uᵀ ḡ_U)) Uᵀ) with F_ij = 1/(λ_j − λ_i) for
/// i ≠ j and F_ij = 0 when |λ_j − λ_i| < kDegenerateGap.
EigVars sym_eig(Var x);

struct SpdReport {
  double asymmetry = 0.0;   // max |X_ij − X_ji|
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  double condition() const { return max_eigenvalue / min_eigenvalue; }
};

SpdReport inspect(const Tensor& x);
/// Symmetric to 1e-10 with minimum eigenvalue ≥ kEigenFloor.
bool is_spd(const Tensor& x);

/// Symmetrize, floor the spectrum at kEigenFloor and reconstruct.
Tensor spd_project(const Tensor& x);

/// X ↦ W [X + diag(ReLU(V β + b))] Wᵀ.
Var bimap_forward(Var x, Var beta, Var w, Var v, Var b);

/// X ↦ U max(ReLU(Q β + c) + kThresholdFloor, Σ) Uᵀ where X = U Σ Uᵀ with Σ
/// sorted descending and thresholds paired by index. At ties the gradient
/// goes to the threshold.
Var reeig_forward(Var x, Var beta, Var q, Var c);

/// Parameters of one BiMap/ReEig pair.
struct SPDLayerParams {
  Parameter w;  // M×M, orthogonal
  Parameter v;  // M×M
  Parameter b;  // M
  Parameter q;  // M×M
  Parameter c;  // M
};

class SPDNetParams {
 public:
  SPDNetParams() = default;
  /// K layer pairs of size M; W random orthogonal, V and Q uniform in
  /// ±1/√M, b and c zero.
  SPDNetParams(std::size_t m, std::size_t k, Rng& rng, const std::string& prefix = "spd");
  /// Layers that leave their input unchanged: W = I, V = Q = 0, b = c = 0.
  static SPDNetParams identity(std::size_t m, std::size_t k, const std::string& prefix = "spd");

  std::size_t dim() const noexcept { return dim_; }
  std::size_t depth() const noexcept { return layers_.size(); }
  std::vector<SPDLayerParams>& layers() noexcept { return layers_; }
  const std::vector<SPDLayerParams>& layers() const noexcept { return layers_; }

  void for_each(const std::function<void(Parameter&)>& fn);
  /// W matrices only.
  void for_each_stiefel(const std::function<void(Parameter&)>& fn);
  std::size_t scalar_count() const;

 private:
  std::size_t dim_ = 0;
  std::vector<SPDLayerParams> layers_;
};

/// Parameters of an SPDNet bound onto one tape.
struct SPDNetVars {
  struct Layer {
    Var w, v, b, q, c;
  };
  std::vector<Layer> layers;
};

SPDNetVars bind(Tape& tape, SPDNetParams& params, Binding how);

/// One recurrent step: K alternating BiMap/ReEig applications.
Var spdnet_step(Var m_prev, Var beta, const SPDNetVars& net);

enum class Direction { ascent, descent };

/// ‖W Wᵀ − I‖∞ (max-abs entry).
double orthogonality_error(const Tensor& w);

/// Project the Euclidean gradient onto the tangent space at W, take a step of
/// size lr in the given direction and retract with a sign-corrected QR.
/// Throws NumericalError when the stepped matrix is rank deficient.
Tensor stiefel_step(const Tensor& w, const Tensor& grad, double lr, Direction direction);

/// Random M×M orthogonal matrix (QR of a Gaussian matrix, sign corrected).
Tensor random_orthogonal(std::size_t m, Rng& rng);

}  // namespace htan::spd
