#include "htan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "htan/errors.hpp"

namespace htan {

namespace {

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got shape " + shape_to_string(t.shape()));
}

void accumulate(Tensor* slot, const Tensor& g) {
  if (slot == nullptr) return;
  auto* dst = slot->data();
  const auto* src = g.data();
  for (std::size_t i = 0, n = g.size(); i < n; ++i) dst[i] += src[i];
}

// Elementwise unary op with derivative expressed through input x and output y.
template <class F, class D>
Var unary(Var a, F f, D dfdx) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, dfdx](Tape& t, const Tensor& g) {
    Tensor* slot = t.grad_slot(ia);
    if (!slot) return;
    const Tensor& xv = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) (*slot)[i] += g[i] * dfdx(xv[i]);
  });
}

// C (m×n) += A (m×k) · B (k×n), summing over k in index order.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C (k×n) += Aᵀ · B for A (m×k), B (m×n).
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

namespace kernels {

Tensor transpose(const Tensor& a) {
  require_rank2("transpose", a);
  const auto m = a.rows(), n = a.cols();
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Tensor c({a.rows(), b.cols()}, 0.0);
  gemm_acc(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2("matmul_nt", a);
  require_rank2("matmul_nt", b);
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: inner dimensions differ " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()) + "ᵀ");
  }
  return matmul(a, transpose(b));
}

}  // namespace kernels

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    accumulate(t.grad_slot(ia), g);
    accumulate(t.grad_slot(ib), g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    accumulate(t.grad_slot(ia), g);
    if (Tensor* s = t.grad_slot(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_slot(ia)) {
      const Tensor& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] += g[i] * bv[i];
    }
    if (Tensor* s = t.grad_slot(ib)) {
      const Tensor& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] += g[i] * av[i];
    }
  });
}

Var div(Var a, Var b) {
  require_same_shape("div", a, b);
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < bv.size(); ++i) {
    if (bv[i] == 0.0) throw DomainError("div: zero divisor", i);
  }
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] /= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (Tensor* s = t.grad_slot(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] += g[i] / bv[i];
    }
    if (Tensor* s = t.grad_slot(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] -= g[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

Var maximum(Var a, Var b) {
  require_same_shape("maximum", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] >= bv[i] ? av[i] : bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    Tensor* sa = t.grad_slot(ia);
    Tensor* sb = t.grad_slot(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (av[i] >= bv[i]) {
        if (sa) (*sa)[i] += g[i];
      } else if (sb) {
        (*sb)[i] += g[i];
      }
    }
  });
}

Var scale(Var a, double s) {
  Tensor y = a.value();
  for (auto& v : y.storage()) v *= s;
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, s](Tape& t, const Tensor& g) {
    if (Tensor* slot = t.grad_slot(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*slot)[i] += g[i] * s;
    }
  });
}

Var add_scalar(Var a, double s) {
  Tensor y = a.value();
  for (auto& v : y.storage()) v += s;
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, const Tensor& g) { accumulate(t.grad_slot(ia), g); });
}

Var neg(Var a) { return scale(a, -1.0); }

Var matmul(Var a, Var b) {
  Tensor y = kernels::matmul(a.value(), b.value());
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    const auto m = av.rows(), k = av.cols(), n = bv.cols();
    if (Tensor* s = t.grad_slot(ia)) {
      // dA = G·Bᵀ
      const Tensor bt = kernels::transpose(bv);
      gemm_acc(g.data(), bt.data(), s->data(), m, n, k);
    }
    if (Tensor* s = t.grad_slot(ib)) {
      // dB = Aᵀ·G
      gemm_tn_acc(av.data(), g.data(), s->data(), m, k, n);
    }
  });
}

Var matmul_nt(Var a, Var b) {
  Tensor y = kernels::matmul_nt(a.value(), b.value());
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    const auto m = av.rows(), k = av.cols(), n = bv.rows();
    if (Tensor* s = t.grad_slot(ia)) {
      // dA = G·B
      gemm_acc(g.data(), bv.data(), s->data(), m, n, k);
    }
    if (Tensor* s = t.grad_slot(ib)) {
      // dB = Gᵀ·A
      gemm_tn_acc(g.data(), av.data(), s->data(), m, n, k);
    }
  });
}

Var transpose(Var a) {
  Tensor y = kernels::transpose(a.value());
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, const Tensor& g) {
    accumulate(t.grad_slot(ia), kernels::transpose(g));
  });
}

Var symmetrize(Var a) {
  const Tensor& x = a.value();
  require_rank2("symmetrize", x);
  if (x.rows() != x.cols()) throw ShapeError("symmetrize: matrix not square " + shape_to_string(x.shape()));
  const auto n = x.rows();
  Tensor y({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) y.at(i, j) = 0.5 * (x.at(i, j) + x.at(j, i));
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, n](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_slot(ia)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) s->at(i, j) += 0.5 * (g.at(i, j) + g.at(j, i));
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_slot(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*s)[i] += g[i];
    }
  });
}

Var as_matrix(Var a) {
  if (a.value().rank() == 2) return a;
  if (a.value().rank() != 1) throw ShapeError("as_matrix: rank " + std::to_string(a.value().rank()));
  return reshape(a, {1, a.value().size()});
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const bool vec = parts.front().value().rank() == 1;
  const std::size_t rows = parts.front().value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    if ((v.rank() == 1) != vec || (!vec && v.rank() != 2) || v.rows() != rows) {
      throw ShapeError("concat: incompatible operand " + shape_to_string(v.shape()) + " with " +
                       shape_to_string(parts.front().shape()));
    }
    widths.push_back(v.cols());
    total += v.cols();
  }
  Tensor y(vec ? Shape{total} : Shape{rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) y[r * total + offset + c] = v[r * widths[k] + c];
    offset += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const auto& p : parts) ids.push_back(p.id());
  return parts.front().tape().record(std::move(y), parts, [ids, widths, rows, total](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (Tensor* s = t.grad_slot(ids[k])) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) (*s)[r * widths[k] + c] += g[r * total + offset + c];
      }
      offset += widths[k];
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  require_rank2("slice_cols", x);
  if (count == 0 || begin + count > x.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + shape_to_string(x.shape()));
  }
  const auto rows = x.rows(), cols = x.cols();
  Tensor y({rows, count});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) y.at(r, c) = x.at(r, begin + c);
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, begin, count, rows, cols](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_slot(ia)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < count; ++c) (*s)[r * cols + begin + c] += g[r * count + c];
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  require_rank2("slice_rows", x);
  if (count == 0 || begin + count > x.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + shape_to_string(x.shape()));
  }
  const auto cols = x.cols();
  Tensor y({count, cols});
  std::copy(x.data() + begin * cols, x.data() + (begin + count) * cols, y.data());
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, begin, cols](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_slot(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*s)[begin * cols + i] += g[i];
    }
  });
}

Var gather(Var a, const std::vector<std::size_t>& flat_indices) {
  const Tensor& x = a.value();
  if (flat_indices.empty()) throw ShapeError("gather: empty index list");
  Tensor y({flat_indices.size()});
  for (std::size_t k = 0; k < flat_indices.size(); ++k) {
    if (flat_indices[k] >= x.size()) {
      throw ShapeError("gather: index " + std::to_string(flat_indices[k]) + " outside " + shape_to_string(x.shape()));
    }
    y[k] = x[flat_indices[k]];
  }
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, flat_indices](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_slot(ia)) {
      for (std::size_t k = 0; k < flat_indices.size(); ++k) (*s)[flat_indices[k]] += g[k];
    }
  });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double x) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 - s);
      });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double th = std::tanh(x);
        return 1.0 - th * th;
      });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(Var a) {
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) throw DomainError("log: non-positive argument", i);
  }
  return unary(
      a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var abs(Var a) {
  return unary(
      a, [](double x) { return std::fabs(x); },
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  const auto ia = a.id();
  return a.tape().record(Tensor::scalar(acc), {a}, [ia](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_slot(ia)) {
      for (auto& v : s->storage()) v += g[0];
    }
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_rows(Var a) {
  const Tensor& x = a.value();
  require_rank2("sum_rows", x);
  const auto m = x.rows(), n = x.cols();
  Tensor y({m, 1});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += x.at(i, j);
    y[i] = acc;
  }
  const auto ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, m, n](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_slot(ia)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*s)[i * n + j] += g[i];
    }
  });
}

Var logsumexp(Var a) {
  const Tensor& x = a.value();
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x.values()) mx = std::max(mx, v);
  double acc = 0.0;
  for (double v : x.values()) acc += std::exp(v - mx);
  const double lse = mx + std::log(acc);
  const auto ia = a.id();
  return a.tape().record(Tensor::scalar(lse), {a}, [ia, lse](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_slot(ia)) {
      const Tensor& x = t.value(ia);
      for (std::size_t i = 0; i < x.size(); ++i) (*s)[i] += g[0] * std::exp(x[i] - lse);
    }
  });
}

Var diag_embed(Var v) {
  const Tensor& x = v.value();
  if (!(x.rank() == 1 || (x.rank() == 2 && x.rows() == 1))) {
    throw ShapeError("diag_embed: expected a vector, got " + shape_to_string(x.shape()));
  }
  const auto n = x.size();
  Tensor y({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) y.at(i, i) = x[i];
  const auto iv = v.id();
  return v.tape().record(std::move(y), {v}, [iv, n](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_slot(iv)) {
      for (std::size_t i = 0; i < n; ++i) (*s)[i] += g[i * n + i];
    }
  });
}

namespace {
void require_row_for(const char* op, const Tensor& a, const Tensor& row) {
  require_rank2(op, a);
  if (row.size() != a.cols() || !(row.rank() == 1 || row.rows() == 1)) {
    throw ShapeError(std::string(op) + ": row operand " + shape_to_string(row.shape()) + " does not match " +
                     shape_to_string(a.shape()));
  }
}
}  // namespace

Var add_rowvec(Var a, Var row) {
  require_row_for("add_rowvec", a.value(), row.value());
  Tensor y = a.value();
  const Tensor& r = row.value();
  const auto m = y.rows(), n = y.cols();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] += r[j];
  const auto ia = a.id(), ir = row.id();
  return a.tape().record(std::move(y), {a, row}, [ia, ir, m, n](Tape& t, const Tensor& g) {
    accumulate(t.grad_slot(ia), g);
    if (Tensor* s = t.grad_slot(ir)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*s)[j] += g[i * n + j];
    }
  });
}

Var mul_rowvec(Var a, Var row) {
  require_row_for("mul_rowvec", a.value(), row.value());
  Tensor y = a.value();
  const Tensor& r = row.value();
  const auto m = y.rows(), n = y.cols();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] *= r[j];
  const auto ia = a.id(), ir = row.id();
  return a.tape().record(std::move(y), {a, row}, [ia, ir, m, n](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& rv = t.value(ir);
    if (Tensor* s = t.grad_slot(ia)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*s)[i * n + j] += g[i * n + j] * rv[j];
    }
    if (Tensor* s = t.grad_slot(ir)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*s)[j] += g[i * n + j] * av[i * n + j];
    }
  });
}

Var mul_colvec(Var a, Var col) {
  const Tensor& x = a.value();
  const Tensor& c = col.value();
  require_rank2("mul_colvec", x);
  if (c.size() != x.rows()) {
    throw ShapeError("mul_colvec: column operand " + shape_to_string(c.shape()) + " does not match " +
                     shape_to_string(x.shape()));
  }
  const auto m = x.rows(), n = x.cols();
  Tensor y = x;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] *= c[i];
  const auto ia = a.id(), ic = col.id();
  return a.tape().record(std::move(y), {a, col}, [ia, ic, m, n](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& cv = t.value(ic);
    if (Tensor* s = t.grad_slot(ia)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*s)[i * n + j] += g[i * n + j] * cv[i];
    }
    if (Tensor* s = t.grad_slot(ic)) {
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * av[i * n + j];
        (*s)[i] += acc;
      }
    }
  });
}

namespace {
Tensor softmax_rows(const Tensor& x) {
  const auto m = x.rows(), n = x.cols();
  Tensor p({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      p.at(i, j) = std::exp(x.at(i, j) - mx);
      z += p.at(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) p.at(i, j) /= z;
  }
  return p;
}
}  // namespace

Var softmax(Var a) {
  require_rank2("softmax", a.value());
  Tensor p = softmax_rows(a.value());
  const auto ia = a.id();
  const auto m = p.rows(), n = p.cols();
  Tensor cached = p;
  return a.tape().record(std::move(p), {a}, [ia, m, n, cached](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_slot(ia)) {
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * cached[i * n + j];
        for (std::size_t j = 0; j < n; ++j) (*s)[i * n + j] += cached[i * n + j] * (g[i * n + j] - dot);
      }
    }
  });
}

Var softmax_cross_entropy(Var logits, const std::vector<int>& targets) {
  const Tensor& x = logits.value();
  require_rank2("softmax_cross_entropy", x);
  const auto m = x.rows(), n = x.cols();
  if (targets.size() != m) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(m) + " rows");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= n) {
      throw DomainError("softmax_cross_entropy: target class out of range", i);
    }
  }
  Tensor p = softmax_rows(x);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    // log-softmax computed directly for accuracy on confident rows
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x.at(i, j) - mx);
    loss += -(x.at(i, static_cast<std::size_t>(targets[i])) - mx - std::log(z));
  }
  loss /= static_cast<double>(m);
  const auto ia = logits.id();
  return logits.tape().record(Tensor::scalar(loss), {logits}, [ia, m, n, p, targets](Tape& t, const Tensor& g) {
    if (Tensor* s = t.grad_slot(ia)) {
      const double w = g[0] / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double onehot = static_cast<int>(j) == targets[i] ? 1.0 : 0.0;
          (*s)[i * n + j] += w * (p[i * n + j] - onehot);
        }
      }
    }
  });
}

}  // namespace htan
