#include "gpode/autodiff/ops.hpp"

#include <cmath>
#include <string>

#include "gpode/error.hpp"

namespace gpode::ad {
namespace {

using Values = std::vector<double>;

const Values& vals(const Tensor& t) { return *t.storage(); }

void require_rank2(const Tensor& a, const char* op) {
  if (a.shape().rank != 2)
    throw DimensionError(std::string(op) + " expects a matrix, got shape " + a.shape().str());
}

void require_square(const Tensor& a, const char* op) {
  require_rank2(a, op);
  if (a.rows() != a.cols())
    throw DimensionError(std::string(op) + " expects a square matrix, got " + a.shape().str());
}

enum class Bcast { same, left_scalar, right_scalar };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::same;
  if (a.size() == 1) return Bcast::left_scalar;
  if (b.size() == 1) return Bcast::right_scalar;
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape().str() + " and " +
                       b.shape().str());
}

template <class Fwd, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd f, DA da, DB db) {
  const Bcast kind = broadcast_kind(a, b, name);
  const Shape shape = kind == Bcast::left_scalar ? b.shape() : a.shape();
  const std::size_t n = shape.size();
  const auto& av = vals(a);
  const auto& bv = vals(b);
  const std::size_t sa = kind == Bcast::left_scalar ? 0 : 1;
  const std::size_t sb = kind == Bcast::right_scalar ? 0 : 1;
  Values out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i * sa], bv[i * sb]);
  return record(shape, std::move(out), {a, b},
                [as = a.storage(), bs = b.storage(), sa, sb, n, da, db](
                    std::span<const double> g, std::span<const std::span<double>> gin) {
                  const auto& x = *as;
                  const auto& y = *bs;
                  if (!gin[0].empty())
                    for (std::size_t i = 0; i < n; ++i) gin[0][i * sa] += g[i] * da(x[i * sa], y[i * sb]);
                  if (!gin[1].empty())
                    for (std::size_t i = 0; i < n; ++i) gin[1][i * sb] += g[i] * db(x[i * sa], y[i * sb]);
                });
}

// Unary op whose derivative is expressed through input x and output y.
template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, Fwd f, Deriv d) {
  const auto& av = vals(a);
  Values out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  auto out_ptr = std::make_shared<const Values>(out);
  return record(a.shape(), std::move(out), {a},
                [as = a.storage(), out_ptr, d](std::span<const double> g,
                                               std::span<const std::span<double>> gin) {
                  const auto& x = *as;
                  const auto& y = *out_ptr;
                  for (std::size_t i = 0; i < x.size(); ++i) gin[0][i] += g[i] * d(x[i], y[i]);
                });
}

double softplus_value(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Dense helpers on row-major buffers.
void gemm(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m,
          bool ta, bool tb, bool accumulate) {
  // c (n x m) (+)= op(a) (n x k) * op(b) (k x m)
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double x = ta ? a[p * n + i] : a[i * k + p];
        const double y = tb ? b[j * k + p] : b[p * m + j];
        s += x * y;
      }
      c[i * m + j] = accumulate ? c[i * m + j] + s : s;
    }
}

// Solves L X = B in place (B is n x m).
void trsm_lower(const double* l, double* b, std::size_t n, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double inv = 1.0 / l[i * n + i];
    for (std::size_t j = 0; j < m; ++j) {
      double s = b[i * m + j];
      for (std::size_t p = 0; p < i; ++p) s -= l[i * n + p] * b[p * m + j];
      b[i * m + j] = s * inv;
    }
  }
}

// Solves L^T X = B in place.
void trsm_lower_t(const double* l, double* b, std::size_t n, std::size_t m) {
  for (std::size_t ii = n; ii-- > 0;) {
    const double inv = 1.0 / l[ii * n + ii];
    for (std::size_t j = 0; j < m; ++j) {
      double s = b[ii * m + j];
      for (std::size_t p = ii + 1; p < n; ++p) s -= l[p * n + ii] * b[p * m + j];
      b[ii * m + j] = s * inv;
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; },
                [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; },
                [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; },
                [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(a, b, "div", [](double x, double y) { return x / y; },
                [](double, double y) { return 1.0 / y; },
                [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor shift(const Tensor& a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.values())
    if (!(v > 0.0)) throw NumericalError("log of non-positive value " + std::to_string(v));
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sin(const Tensor& a) {
  return unary(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor softplus(const Tensor& a) {
  return unary(a, softplus_value, [](double x, double) { return sigmoid(x); });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  const std::size_t n = a.size();
  return record(Shape::scalar(), {s}, {a},
                [n](std::span<const double> g, std::span<const std::span<double>> gin) {
                  for (std::size_t i = 0; i < n; ++i) gin[0][i] += g[0];
                });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner dimensions differ, " + a.shape().str() + " x " + b.shape().str());
  Values out(n * m);
  gemm(vals(a).data(), vals(b).data(), out.data(), n, k, m, false, false, false);
  return record(Shape::matrix(n, m), std::move(out), {a, b},
                [as = a.storage(), bs = b.storage(), n, k, m](std::span<const double> g,
                                                             std::span<const std::span<double>> gin) {
                  // dA = G B^T, dB = A^T G
                  if (!gin[0].empty()) gemm(g.data(), bs->data(), gin[0].data(), n, m, k, false, true, true);
                  if (!gin[1].empty()) gemm(as->data(), g.data(), gin[1].data(), k, n, m, true, false, true);
                });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  const auto& av = vals(a);
  Values out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return record(Shape::matrix(c, r), std::move(out), {a},
                [r, c](std::span<const double> g, std::span<const std::span<double>> gin) {
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gin[0][i * c + j] += g[j * r + i];
                });
}

Tensor cholesky(const Tensor& a) {
  require_square(a, "cholesky");
  const std::size_t n = a.rows();
  const auto& av = vals(a);
  Values l(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double d = av[j * n + j];
    for (std::size_t p = 0; p < j; ++p) d -= l[j * n + p] * l[j * n + p];
    if (!(d > 0.0) || !std::isfinite(d))
      throw NumericalError("cholesky: matrix is not positive definite (leading minor of order " +
                           std::to_string(j + 1) + " is not positive)");
    const double ljj = std::sqrt(d);
    l[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = av[i * n + j];
      for (std::size_t p = 0; p < j; ++p) s -= l[i * n + p] * l[j * n + p];
      l[i * n + j] = s / ljj;
    }
  }
  auto lp = std::make_shared<const Values>(l);
  return record(Shape::matrix(n, n), std::move(l), {a},
                [lp, n](std::span<const double> g, std::span<const std::span<double>> gin) {
                  // A_bar = sym(L^-T Phi(L^T L_bar) L^-1), Phi = lower triangle with halved diagonal.
                  const auto& lv = *lp;
                  Values lbar(n * n, 0.0);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j <= i; ++j) lbar[i * n + j] = g[i * n + j];
                  Values p(n * n);
                  gemm(lv.data(), lbar.data(), p.data(), n, n, n, true, false, false);
                  for (std::size_t i = 0; i < n; ++i) {
                    p[i * n + i] *= 0.5;
                    for (std::size_t j = i + 1; j < n; ++j) p[i * n + j] = 0.0;
                  }
                  // S = L^-T P L^-1: solve L^T X = P, then S = X L^-1 via (L^-T X^T)^T.
                  trsm_lower_t(lv.data(), p.data(), n, n);
                  Values pt(n * n);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j) pt[i * n + j] = p[j * n + i];
                  trsm_lower_t(lv.data(), pt.data(), n, n);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                      gin[0][i * n + j] += 0.5 * (pt[i * n + j] + pt[j * n + i]);
                });
}

Tensor solve_lower(const Tensor& l, const Tensor& b) {
  require_square(l, "solve_lower");
  require_rank2(b, "solve_lower");
  const std::size_t n = l.rows(), m = b.cols();
  if (b.rows() != n) throw DimensionError("solve_lower: right-hand side has wrong row count");
  Values x(vals(b));
  trsm_lower(vals(l).data(), x.data(), n, m);
  auto xp = std::make_shared<const Values>(x);
  return record(Shape::matrix(n, m), std::move(x), {l, b},
                [ls = l.storage(), xp, n, m](std::span<const double> g,
                                             std::span<const std::span<double>> gin) {
                  Values bbar(g.begin(), g.end());
                  trsm_lower_t(ls->data(), bbar.data(), n, m);
                  if (!gin[1].empty())
                    for (std::size_t i = 0; i < n * m; ++i) gin[1][i] += bbar[i];
                  if (!gin[0].empty()) {
                    const auto& xv = *xp;
                    // L_bar = -tril(B_bar X^T)
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j <= i; ++j) {
                        double s = 0.0;
                        for (std::size_t c = 0; c < m; ++c) s += bbar[i * m + c] * xv[j * m + c];
                        gin[0][i * n + j] -= s;
                      }
                  }
                });
}

Tensor solve_lower_transposed(const Tensor& l, const Tensor& b) {
  require_square(l, "solve_lower_transposed");
  require_rank2(b, "solve_lower_transposed");
  const std::size_t n = l.rows(), m = b.cols();
  if (b.rows() != n) throw DimensionError("solve_lower_transposed: right-hand side has wrong row count");
  Values x(vals(b));
  trsm_lower_t(vals(l).data(), x.data(), n, m);
  auto xp = std::make_shared<const Values>(x);
  return record(Shape::matrix(n, m), std::move(x), {l, b},
                [ls = l.storage(), xp, n, m](std::span<const double> g,
                                             std::span<const std::span<double>> gin) {
                  Values bbar(g.begin(), g.end());
                  trsm_lower(ls->data(), bbar.data(), n, m);
                  if (!gin[1].empty())
                    for (std::size_t i = 0; i < n * m; ++i) gin[1][i] += bbar[i];
                  if (!gin[0].empty()) {
                    const auto& xv = *xp;
                    // L_bar = -tril(X B_bar^T)
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j <= i; ++j) {
                        double s = 0.0;
                        for (std::size_t c = 0; c < m; ++c) s += xv[i * m + c] * bbar[j * m + c];
                        gin[0][i * n + j] -= s;
                      }
                  }
                });
}

Tensor add_diag(const Tensor& a, const Tensor& s) {
  require_square(a, "add_diag");
  if (s.size() != 1) throw DimensionError("add_diag: shift must hold one value");
  const std::size_t n = a.rows();
  Values out(vals(a));
  const double sv = s[0];
  for (std::size_t i = 0; i < n; ++i) out[i * n + i] += sv;
  return record(a.shape(), std::move(out), {a, s},
                [n](std::span<const double> g, std::span<const std::span<double>> gin) {
                  if (!gin[0].empty())
                    for (std::size_t i = 0; i < n * n; ++i) gin[0][i] += g[i];
                  if (!gin[1].empty())
                    for (std::size_t i = 0; i < n; ++i) gin[1][0] += g[i * n + i];
                });
}

Tensor diag(const Tensor& a) {
  require_square(a, "diag");
  const std::size_t n = a.rows();
  Values out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a(i, i);
  return record(Shape::vector(n), std::move(out), {a},
                [n](std::span<const double> g, std::span<const std::span<double>> gin) {
                  for (std::size_t i = 0; i < n; ++i) gin[0][i * n + i] += g[i];
                });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape.size() != a.size())
    throw DimensionError("reshape " + a.shape().str() + " to " + shape.str());
  return flat_slice(a, 0, shape);
}

Tensor flat_slice(const Tensor& a, std::size_t offset, Shape shape) {
  const std::size_t n = shape.size();
  if (offset + n > a.size()) throw DimensionError("flat_slice out of range for " + a.shape().str());
  const auto& av = vals(a);
  Values out(av.begin() + static_cast<std::ptrdiff_t>(offset),
             av.begin() + static_cast<std::ptrdiff_t>(offset + n));
  return record(shape, std::move(out), {a},
                [offset, n](std::span<const double> g, std::span<const std::span<double>> gin) {
                  for (std::size_t i = 0; i < n; ++i) gin[0][offset + i] += g[i];
                });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank2(a, "slice_rows");
  if (begin + count > a.rows()) throw DimensionError("slice_rows out of range for " + a.shape().str());
  return flat_slice(a, begin * a.cols(), Shape::matrix(count, a.cols()));
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c || p.shape().rank == 0)
      throw DimensionError("concat_rows: column mismatch, " + p.shape().str());
    r += p.rows();
  }
  Values out;
  out.reserve(r * c);
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
    sizes.push_back(p.size());
  }
  return record(Shape::matrix(r, c), std::move(out), parts,
                [sizes](std::span<const double> g, std::span<const std::span<double>> gin) {
                  std::size_t off = 0;
                  for (std::size_t k = 0; k < sizes.size(); ++k) {
                    if (!gin[k].empty())
                      for (std::size_t i = 0; i < sizes[k]; ++i) gin[k][i] += g[off + i];
                    off += sizes[k];
                  }
                });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw DimensionError("concat_cols: row mismatch");
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols(), c = ca + cb;
  Values out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out[i * c + j] = a[i * ca + j];
    for (std::size_t j = 0; j < cb; ++j) out[i * c + ca + j] = b[i * cb + j];
  }
  return record(Shape::matrix(r, c), std::move(out), {a, b},
                [r, ca, cb, c](std::span<const double> g, std::span<const std::span<double>> gin) {
                  for (std::size_t i = 0; i < r; ++i) {
                    if (!gin[0].empty())
                      for (std::size_t j = 0; j < ca; ++j) gin[0][i * ca + j] += g[i * c + j];
                    if (!gin[1].empty())
                      for (std::size_t j = 0; j < cb; ++j) gin[1][i * cb + j] += g[i * c + ca + j];
                  }
                });
}

Tensor scale_cols(const Tensor& a, const Tensor& v) {
  const std::size_t r = a.rows(), c = a.cols();
  if (v.size() != c) throw DimensionError("scale_cols: vector length differs from column count");
  Values out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a[i * c + j] * v[j];
  return record(a.shape(), std::move(out), {a, v},
                [as = a.storage(), vs = v.storage(), r, c](std::span<const double> g,
                                                           std::span<const std::span<double>> gin) {
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                      if (!gin[0].empty()) gin[0][i * c + j] += g[i * c + j] * (*vs)[j];
                      if (!gin[1].empty()) gin[1][j] += g[i * c + j] * (*as)[i * c + j];
                    }
                });
}

Tensor row_axpy(const Tensor& base, std::span<const Tensor> terms, std::span<const double> coeff) {
  const std::size_t rows = base.rows(), cols = base.cols(), s = terms.size();
  if (coeff.size() != rows * s) throw DimensionError("row_axpy: coefficient count mismatch");
  for (const auto& t : terms)
    if (t.size() != base.size()) throw DimensionError("row_axpy: term shape mismatch");
  const auto& bv = vals(base);
  Values out(rows * cols);
  for (std::size_t b = 0; b < rows; ++b)
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < s; ++k) acc += coeff[b * s + k] * terms[k][b * cols + j];
      out[b * cols + j] = bv[b * cols + j] + acc;
    }
  std::vector<Tensor> parents;
  parents.reserve(s + 1);
  parents.push_back(base);
  parents.insert(parents.end(), terms.begin(), terms.end());
  std::vector<double> c(coeff.begin(), coeff.end());
  return record(base.shape(), std::move(out), parents,
                [c = std::move(c), rows, cols, s](std::span<const double> g,
                                                   std::span<const std::span<double>> gin) {
                  if (!gin[0].empty())
                    for (std::size_t i = 0; i < rows * cols; ++i) gin[0][i] += g[i];
                  for (std::size_t k = 0; k < s; ++k) {
                    if (gin[k + 1].empty()) continue;
                    for (std::size_t b = 0; b < rows; ++b) {
                      const double w = c[b * s + k];
                      for (std::size_t j = 0; j < cols; ++j) gin[k + 1][b * cols + j] += w * g[b * cols + j];
                    }
                  }
                });
}

Tensor tril_softplus_blocks(const Tensor& raw, std::size_t d) {
  const std::size_t rows = raw.rows();
  if (raw.cols() != d * d) throw DimensionError("tril_softplus_blocks: expected D*D values per row");
  const auto& rv = vals(raw);
  Values out(rows * d * d, 0.0);
  for (std::size_t b = 0; b < rows; ++b)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        const std::size_t idx = b * d * d + i * d + j;
        out[idx] = i == j ? softplus_value(rv[idx]) : rv[idx];
      }
  return record(raw.shape(), std::move(out), {raw},
                [rs = raw.storage(), rows, d](std::span<const double> g,
                                              std::span<const std::span<double>> gin) {
                  for (std::size_t b = 0; b < rows; ++b)
                    for (std::size_t i = 0; i < d; ++i)
                      for (std::size_t j = 0; j <= i; ++j) {
                        const std::size_t idx = b * d * d + i * d + j;
                        gin[0][idx] += i == j ? g[idx] * sigmoid((*rs)[idx]) : g[idx];
                      }
                });
}

Tensor diag_softplus_blocks(const Tensor& raw) {
  const std::size_t rows = raw.rows(), d = raw.cols();
  const auto& rv = vals(raw);
  Values out(rows * d * d, 0.0);
  for (std::size_t b = 0; b < rows; ++b)
    for (std::size_t i = 0; i < d; ++i) out[b * d * d + i * d + i] = softplus_value(rv[b * d + i]);
  return record(Shape::matrix(rows, d * d), std::move(out), {raw},
                [rs = raw.storage(), rows, d](std::span<const double> g,
                                              std::span<const std::span<double>> gin) {
                  for (std::size_t b = 0; b < rows; ++b)
                    for (std::size_t i = 0; i < d; ++i)
                      gin[0][b * d + i] += g[b * d * d + i * d + i] * sigmoid((*rs)[b * d + i]);
                });
}

Tensor block_matvec(const Tensor& blocks, const Tensor& v) {
  const std::size_t rows = v.rows(), d = v.cols();
  if (blocks.rows() != rows || blocks.cols() != d * d)
    throw DimensionError("block_matvec: blocks " + blocks.shape().str() + " vs vectors " + v.shape().str());
  const auto& lv = vals(blocks);
  const auto& xv = vals(v);
  Values out(rows * d);
  for (std::size_t b = 0; b < rows; ++b)
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += lv[b * d * d + i * d + j] * xv[b * d + j];
      out[b * d + i] = s;
    }
  return record(Shape::matrix(rows, d), std::move(out), {blocks, v},
                [ls = blocks.storage(), xs = v.storage(), rows, d](
                    std::span<const double> g, std::span<const std::span<double>> gin) {
                  for (std::size_t b = 0; b < rows; ++b)
                    for (std::size_t i = 0; i < d; ++i) {
                      const double gi = g[b * d + i];
                      for (std::size_t j = 0; j < d; ++j) {
                        if (!gin[0].empty()) gin[0][b * d * d + i * d + j] += gi * (*xs)[b * d + j];
                        if (!gin[1].empty()) gin[1][b * d + j] += gi * (*ls)[b * d * d + i * d + j];
                      }
                    }
                });
}

Tensor block_diag(const Tensor& blocks, std::size_t d) {
  const std::size_t rows = blocks.rows();
  if (blocks.cols() != d * d) throw DimensionError("block_diag: expected D*D values per row");
  Values out(rows * d);
  for (std::size_t b = 0; b < rows; ++b)
    for (std::size_t i = 0; i < d; ++i) out[b * d + i] = blocks[b * d * d + i * d + i];
  return record(Shape::matrix(rows, d), std::move(out), {blocks},
                [rows, d](std::span<const double> g, std::span<const std::span<double>> gin) {
                  for (std::size_t b = 0; b < rows; ++b)
                    for (std::size_t i = 0; i < d; ++i) gin[0][b * d * d + i * d + i] += g[b * d + i];
                });
}

}  // namespace gpode::ad
