#include "htan/apl.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "htan/errors.hpp"

namespace htan::apl {

namespace {

void require_finite(const std::vector<double>& v, const char* what) {
  if (v.empty()) throw ShapeError(std::string(what) + ": length must be at least 1");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw DomainError(std::string(what) + ": non-finite entry", i);
  }
}

bool is_vector_like(const Tensor& t) { return t.rank() == 1 || (t.rank() == 2 && t.rows() == 1); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

template <class F>
double integrate(F f, double a, double b, const std::string& what) {
  if (b <= a) return 0.0;
  double error = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, 1e-13, &error);
  if (!(error <= kGramTolerance) || !std::isfinite(value)) {
    throw NumericalError("gaussian_gram: quadrature did not converge for " + what + " (error estimate " +
                         std::to_string(error) + ")");
  }
  return value;
}

std::string entry_name(std::size_t i, std::size_t j) {
  return "entry (" + std::to_string(i) + ", " + std::to_string(j) + ")";
}

// The integrand vanishes above min(β); below it the normal density must be
// covered as well, so the window reaches kGramMargin past min(β, 0).
double integration_lower(std::span<const double> b) {
  return std::min(*std::min_element(b.begin(), b.end()), 0.0) - kGramMargin;
}

// ∫_{lower}^{min(bi,bj)} (bj − x) N(x) dx, the derivative of G_ij w.r.t. β_i.
double gram_partial(double beta_i, double beta_j, double lower, const std::string& what) {
  const double upper = std::min(beta_i, beta_j);
  return integrate([beta_j](double x) { return (beta_j - x) * normal_pdf(x); }, lower, upper, what);
}

Tensor gram_from_values(const std::vector<double>& b) {
  const auto m = b.size();
  const double lower = integration_lower(b);
  Tensor g({m, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      const double upper = std::min(b[i], b[j]);
      const double bi = b[i], bj = b[j];
      const double v = integrate([bi, bj](double x) { return (bi - x) * (bj - x) * normal_pdf(x); }, lower, upper,
                                 entry_name(i, j));
      g.at(i, j) = v;
      g.at(j, i) = v;
    }
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < m; ++i) trace += g.at(i, i);
  const double eps = kGramJitter * trace / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) g.at(i, i) += eps;
  return g;
}

}  // namespace

APLBasis::APLBasis(std::vector<double> beta) : beta_(std::move(beta)) { require_finite(beta_, "APLBasis"); }

APLCoordinates::APLCoordinates(std::vector<double> alpha) : alpha_(std::move(alpha)) {
  require_finite(alpha_, "APLCoordinates");
}

double apl_value(double x, std::span<const double> alpha, std::span<const double> beta) {
  if (alpha.size() != beta.size()) throw ShapeError("apl_value: alpha and beta lengths differ");
  double y = x > 0.0 ? x : 0.0;
  for (std::size_t m = 0; m < alpha.size(); ++m) {
    const double r = beta[m] - x;
    if (r > 0.0) y += alpha[m] * r;
  }
  return y;
}

Var apl_apply(Var x, Var alpha, Var beta) {
  const Tensor& av = alpha.value();
  const Tensor& bv = beta.value();
  if (!is_vector_like(av) || !is_vector_like(bv) || av.size() != bv.size()) {
    throw ShapeError("apl_apply: alpha " + shape_to_string(av.shape()) + " and beta " + shape_to_string(bv.shape()) +
                     " must be vectors of equal length");
  }
  const Tensor& xv = x.value();
  const std::size_t m = av.size();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = apl_value(xv[i], av.values(), bv.values());

  const auto ix = x.id(), ia = alpha.id(), ib = beta.id();
  return x.tape().record(std::move(y), {x, alpha, beta}, [ix, ia, ib, m](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(ix);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    Tensor* sx = t.grad_slot(ix);
    Tensor* sa = t.grad_slot(ia);
    Tensor* sb = t.grad_slot(ib);
    std::vector<double> da(m, 0.0), db(m, 0.0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double gi = g[i];
      double dx = xv[i] > 0.0 ? 1.0 : 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        const double r = bv[k] - xv[i];
        if (r > 0.0) {
          dx -= av[k];
          da[k] += gi * r;
          db[k] += gi * av[k];
        }
      }
      if (sx) (*sx)[i] += gi * dx;
    }
    if (sa)
      for (std::size_t k = 0; k < m; ++k) (*sa)[k] += da[k];
    if (sb)
      for (std::size_t k = 0; k < m; ++k) (*sb)[k] += db[k];
  });
}

double gram_entry(double beta_i, double beta_j, double lower) {
  const double upper = std::min(beta_i, beta_j);
  return integrate([beta_i, beta_j](double x) { return (beta_i - x) * (beta_j - x) * normal_pdf(x); }, lower, upper,
                   "requested entry");
}

Tensor gaussian_gram(const APLBasis& beta) {
  return gram_from_values(std::vector<double>(beta.values().begin(), beta.values().end()));
}

Var gaussian_gram(Var beta) {
  const Tensor& bv = beta.value();
  if (!is_vector_like(bv)) throw ShapeError("gaussian_gram: beta must be a vector, got " + shape_to_string(bv.shape()));
  std::vector<double> b(bv.values().begin(), bv.values().end());
  require_finite(b, "gaussian_gram");
  Tensor g = gram_from_values(b);
  const auto ib = beta.id();
  return beta.tape().record(std::move(g), {beta}, [ib](Tape& t, const Tensor& gbar) {
    Tensor* sb = t.grad_slot(ib);
    if (!sb) return;
    const Tensor& bv = t.value(ib);
    const auto m = bv.size();
    const double lower = integration_lower(bv.values());
    double gbar_trace = 0.0;
    for (std::size_t i = 0; i < m; ++i) gbar_trace += gbar.at(i, i);
    const double jitter_scale = kGramJitter / static_cast<double>(m);
    for (std::size_t k = 0; k < m; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double h = gram_partial(bv[k], bv[j], lower, entry_name(k, j) + " derivative");
        acc += (gbar.at(k, j) + gbar.at(j, k)) * h;
        if (j == k) acc += gbar_trace * jitter_scale * 2.0 * h;
      }
      (*sb)[k] += acc;
    }
  });
}

Var mahalanobis_sq(Var a1, Var a2, Var metric) {
  const Tensor& m = metric.value();
  if (a1.value().size() != a2.value().size() || m.rank() != 2 || m.rows() != m.cols() ||
      m.rows() != a1.value().size()) {
    throw ShapeError("mahalanobis_sq: coordinates " + shape_to_string(a1.shape()) + ", " + shape_to_string(a2.shape()) +
                     " incompatible with metric " + shape_to_string(m.shape()));
  }
  Var d = as_matrix(sub(a1, a2));
  return reshape(matmul_nt(matmul(d, metric), d), {1});
}

double mahalanobis_sq(const APLCoordinates& a1, const APLCoordinates& a2, const Tensor& metric) {
  Tape tape;
  return mahalanobis_sq(tape.constant(a1.as_row()), tape.constant(a2.as_row()), tape.constant(metric)).value().item();
}

Var distance_matrix(const std::vector<Var>& alphas, Var metric) {
  const auto n = alphas.size();
  if (n < 1) throw ShapeError("distance_matrix: no coordinates");
  Tape& tape = metric.tape();
  Var zero = tape.constant(Tensor::scalar(0.0));
  std::vector<Var> entries(n * n, zero);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      Var d = mahalanobis_sq(alphas[i], alphas[j], metric);
      entries[i * n + j] = d;
      entries[j * n + i] = d;
    }
  }
  return reshape(concat(entries), {n, n});
}

}  // namespace htan::apl
