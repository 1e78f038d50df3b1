#include "htan/spd.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "htan/errors.hpp"

namespace htan::spd {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;

void require_square(const char* op, const Tensor& x) {
  if (x.rank() != 2 || x.rows() != x.cols()) {
    throw ShapeError(std::string(op) + ": expected a square matrix, got " + shape_to_string(x.shape()));
  }
}

void require_finite(const char* op, const Tensor& x) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw DomainError(std::string(op) + ": non-finite entry", i);
  }
}

Tensor to_tensor(const RowMatrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  std::copy(m.data(), m.data() + m.size(), t.data());
  return t;
}

}  // namespace

EigPair sym_eig(const Tensor& x) {
  require_square("sym_eig", x);
  require_finite("sym_eig", x);
  const auto n = static_cast<Eigen::Index>(x.rows());
  ConstMap xm(x.data(), n, n);
  const RowMatrix sym = 0.5 * (xm + xm.transpose());
  Eigen::SelfAdjointEigenSolver<RowMatrix> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericalError("sym_eig: eigensolver failed to converge");
  // Eigen returns ascending order; flip to descending.
  const auto& vals = solver.eigenvalues();
  const auto& vecs = solver.eigenvectors();
  EigPair out{Tensor({x.rows(), x.rows()}), Tensor({x.rows()})};
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = n - 1 - k;
    out.values[static_cast<std::size_t>(k)] = vals(src);
    for (Eigen::Index r = 0; r < n; ++r) out.vectors.at(static_cast<std::size_t>(r), static_cast<std::size_t>(k)) = vecs(r, src);
  }
  return out;
}

EigVars sym_eig(Var x) {
  const Tensor& xv = x.value();
  EigPair eig = sym_eig(xv);
  const auto m = xv.rows();
  Tensor packed({m + 1, m});
  std::copy(eig.vectors.data(), eig.vectors.data() + m * m, packed.data());
  std::copy(eig.values.data(), eig.values.data() + m, packed.data() + m * m);

  const auto ix = x.id();
  Var p = x.tape().record(std::move(packed), {x}, [ix, m, e = std::move(eig)](Tape& t, const Tensor& g) {
    Tensor* slot = t.grad_slot(ix);
    if (!slot) return;
    const auto n = static_cast<Eigen::Index>(m);
    ConstMap u(e.vectors.data(), n, n);
    ConstMap gu(g.data(), n, n);
    RowMatrix inner = u.transpose() * gu;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) {
          inner(i, j) = g[m * m + static_cast<std::size_t>(i)];
          continue;
        }
        const double gap = e.values[static_cast<std::size_t>(j)] - e.values[static_cast<std::size_t>(i)];
        inner(i, j) = std::fabs(gap) < kDegenerateGap ? 0.0 : inner(i, j) / gap;
      }
    }
    const RowMatrix dx = u * inner * u.transpose();
    const RowMatrix dsym = 0.5 * (dx + dx.transpose());
    for (std::size_t k = 0; k < m * m; ++k) (*slot)[k] += dsym.data()[k];
  });
  return {slice_rows(p, 0, m), slice_rows(p, m, 1)};
}

SpdReport inspect(const Tensor& x) {
  require_square("inspect", x);
  SpdReport r;
  const auto n = x.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) r.asymmetry = std::max(r.asymmetry, std::fabs(x.at(i, j) - x.at(j, i)));
  const EigPair e = sym_eig(x);
  r.max_eigenvalue = e.values[0];
  r.min_eigenvalue = e.values[n - 1];
  return r;
}

bool is_spd(const Tensor& x) {
  const SpdReport r = inspect(x);
  return r.asymmetry <= 1e-10 && r.min_eigenvalue >= kEigenFloor;
}

Tensor spd_project(const Tensor& x) {
  require_square("spd_project", x);
  require_finite("spd_project", x);
  const EigPair e = sym_eig(x);
  const auto n = static_cast<Eigen::Index>(x.rows());
  ConstMap u(e.vectors.data(), n, n);
  Eigen::VectorXd lam(n);
  for (Eigen::Index i = 0; i < n; ++i) lam(i) = std::max(e.values[static_cast<std::size_t>(i)], kEigenFloor);
  RowMatrix rec = u * lam.asDiagonal() * u.transpose();
  rec = 0.5 * (rec + rec.transpose()).eval();
  return to_tensor(rec);
}

Var bimap_forward(Var x, Var beta, Var w, Var v, Var b) {
  const auto m = x.value().rows();
  require_square("bimap_forward", x.value());
  if (beta.value().size() != m || w.value().rows() != m || w.value().cols() != m || v.value().rows() != m ||
      v.value().cols() != m || b.value().size() != m) {
    throw ShapeError("bimap_forward: parameter dimensions do not match input " + shape_to_string(x.shape()));
  }
  Var modulation = relu(add(matmul_nt(as_matrix(beta), v), as_matrix(b)));
  Var shifted = add(x, diag_embed(modulation));
  return symmetrize(matmul_nt(matmul(w, shifted), w));
}

Var reeig_forward(Var x, Var beta, Var q, Var c) {
  const auto m = x.value().rows();
  require_square("reeig_forward", x.value());
  if (beta.value().size() != m || q.value().rows() != m || q.value().cols() != m || c.value().size() != m) {
    throw ShapeError("reeig_forward: parameter dimensions do not match input " + shape_to_string(x.shape()));
  }
  Var thresholds = add_scalar(relu(add(matmul_nt(as_matrix(beta), q), as_matrix(c))), kThresholdFloor);
  EigVars eig = sym_eig(x);
  Var clamped = maximum(thresholds, eig.values);
  return symmetrize(matmul_nt(mul_rowvec(eig.vectors, clamped), eig.vectors));
}

Tensor random_orthogonal(std::size_t m, Rng& rng) {
  const Tensor g = normal_tensor({m, m}, 0.0, 1.0, rng);
  const auto n = static_cast<Eigen::Index>(m);
  ConstMap gm(g.data(), n, n);
  Eigen::HouseholderQR<RowMatrix> qr(gm);
  RowMatrix q = qr.householderQ();
  const RowMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < n; ++k) {
    if (r(k, k) < 0) q.col(k) *= -1.0;
  }
  return to_tensor(q);
}

SPDNetParams::SPDNetParams(std::size_t m, std::size_t k, Rng& rng, const std::string& prefix) : dim_(m) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(m));
  for (std::size_t l = 0; l < k; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l) + ".";
    SPDLayerParams layer;
    layer.w = Parameter(p + "w", random_orthogonal(m, rng));
    layer.v = Parameter(p + "v", uniform_tensor({m, m}, -bound, bound, rng));
    layer.b = Parameter(p + "b", Tensor({m}, 0.0));
    layer.q = Parameter(p + "q", uniform_tensor({m, m}, -bound, bound, rng));
    layer.c = Parameter(p + "c", Tensor({m}, 0.0));
    layers_.push_back(std::move(layer));
  }
}

SPDNetParams SPDNetParams::identity(std::size_t m, std::size_t k, const std::string& prefix) {
  SPDNetParams net;
  net.dim_ = m;
  for (std::size_t l = 0; l < k; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l) + ".";
    SPDLayerParams layer;
    layer.w = Parameter(p + "w", Tensor::identity(m));
    layer.v = Parameter(p + "v", Tensor({m, m}, 0.0));
    layer.b = Parameter(p + "b", Tensor({m}, 0.0));
    layer.q = Parameter(p + "q", Tensor({m, m}, 0.0));
    layer.c = Parameter(p + "c", Tensor({m}, 0.0));
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

void SPDNetParams::for_each(const std::function<void(Parameter&)>& fn) {
  for (auto& l : layers_) {
    fn(l.w);
    fn(l.v);
    fn(l.b);
    fn(l.q);
    fn(l.c);
  }
}

void SPDNetParams::for_each_stiefel(const std::function<void(Parameter&)>& fn) {
  for (auto& l : layers_) fn(l.w);
}

std::size_t SPDNetParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.w.value.size() + l.v.value.size() + l.b.value.size() + l.q.value.size() + l.c.value.size();
  return n;
}

SPDNetVars bind(Tape& tape, SPDNetParams& params, Binding how) {
  SPDNetVars vars;
  for (auto& l : params.layers()) {
    vars.layers.push_back({htan::bind(tape, l.w, how), htan::bind(tape, l.v, how), htan::bind(tape, l.b, how),
                           htan::bind(tape, l.q, how), htan::bind(tape, l.c, how)});
  }
  return vars;
}

Var spdnet_step(Var m_prev, Var beta, const SPDNetVars& net) {
  Var x = m_prev;
  for (const auto& l : net.layers) {
    x = bimap_forward(x, beta, l.w, l.v, l.b);
    x = reeig_forward(x, beta, l.q, l.c);
  }
  return x;
}

double orthogonality_error(const Tensor& w) {
  require_square("orthogonality_error", w);
  const Tensor wwt = kernels::matmul_nt(w, w);
  double err = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) err = std::max(err, std::fabs(wwt.at(i, j) - (i == j ? 1.0 : 0.0)));
  return err;
}

Tensor stiefel_step(const Tensor& w, const Tensor& grad, double lr, Direction direction) {
  require_square("stiefel_step", w);
  if (!grad.same_shape(w)) {
    throw ShapeError("stiefel_step: gradient " + shape_to_string(grad.shape()) + " does not match " +
                     shape_to_string(w.shape()));
  }
  const auto n = static_cast<Eigen::Index>(w.rows());
  ConstMap wm(w.data(), n, n);
  ConstMap gm(grad.data(), n, n);
  const RowMatrix wtg = wm.transpose() * gm;
  const RowMatrix tangent = gm - wm * (0.5 * (wtg + wtg.transpose()));
  const double sign = direction == Direction::ascent ? 1.0 : -1.0;
  const RowMatrix stepped = wm + sign * lr * tangent;

  Eigen::HouseholderQR<RowMatrix> qr(stepped);
  RowMatrix q = qr.householderQ();
  const RowMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  const double scale = std::max(1.0, stepped.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < n; ++k) {
    if (std::fabs(r(k, k)) < 1e-12 * scale) {
      throw NumericalError("stiefel_step: rank-deficient retraction (|R_" + std::to_string(k) + std::to_string(k) +
                           "| = " + std::to_string(std::fabs(r(k, k))) + ")");
    }
    if (r(k, k) < 0) q.col(k) *= -1.0;
  }
  Tensor out = to_tensor(q);
  const double err = orthogonality_error(out);
  if (err >= kStiefelTolerance) {
    throw NumericalError("stiefel_step: retraction left ||WW^T - I|| = " + std::to_string(err));
  }
  return out;
}

}  // namespace htan::spd
