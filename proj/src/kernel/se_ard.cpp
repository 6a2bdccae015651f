#include "gpode/kernel/se_ard.hpp"

#include <cmath>

#include "gpode/error.hpp"

namespace gpode::kernel {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw ContractError("softplus_inverse needs a positive value");
  return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

KernelHyper KernelHyper::from_values(std::span<const double> lengthscales, double signal_variance) {
  std::vector<double> raw(lengthscales.size());
  for (std::size_t d = 0; d < raw.size(); ++d) raw[d] = softplus_inverse(lengthscales[d]);
  return {Tensor(ad::Shape::vector(raw.size()), raw), Tensor::scalar(softplus_inverse(signal_variance))};
}

std::vector<double> KernelHyper::lengthscale_values() const {
  std::vector<double> out;
  for (double r : raw_lengthscales.values()) out.push_back(softplus(r));
  return out;
}

double KernelHyper::signal_variance_value() const { return softplus(raw_signal_variance.item()); }

double k(std::span<const double> x, std::span<const double> y, std::span<const double> ls, double sf2) {
  if (x.size() != y.size() || x.size() != ls.size())
    throw DimensionError("kernel: state dimensions differ");
  double s = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double r = (x[d] - y[d]) / ls[d];
    s += r * r;
  }
  return sf2 * std::exp(-0.5 * s);
}

Tensor gram(const Tensor& x, const Tensor& z, const Tensor& ls, const Tensor& sf2) {
  const std::size_t n = x.rows(), m = z.rows(), dim = x.cols();
  if (z.cols() != dim || ls.size() != dim)
    throw DimensionError("gram: dimension mismatch between " + x.shape().str() + ", " + z.shape().str() +
                         " and lengthscales " + ls.shape().str());
  if (sf2.size() != 1) throw DimensionError("gram: signal variance must be a single value");
  std::vector<double> inv(dim);
  for (std::size_t d = 0; d < dim; ++d) inv[d] = 1.0 / (ls[d] * ls[d]);
  const double s2 = sf2[0];
  std::vector<double> q(n * m), out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double r = x[i * dim + d] - z[j * dim + d];
        s += r * r * inv[d];
      }
      q[i * m + j] = std::exp(-0.5 * s);
      out[i * m + j] = s2 * q[i * m + j];
    }
  return ad::record(
      ad::Shape::matrix(n, m), std::move(out), {x, z, ls, sf2},
      [xs = x.storage(), zs = z.storage(), lss = ls.storage(), q = std::move(q), inv, s2, n, m, dim](
          std::span<const double> g, std::span<const std::span<double>> gin) {
        const auto& xv = *xs;
        const auto& zv = *zs;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const double gq = g[i * m + j] * q[i * m + j];
            if (!gin[3].empty()) gin[3][0] += gq;
            const double w = gq * s2;
            for (std::size_t d = 0; d < dim; ++d) {
              const double r = xv[i * dim + d] - zv[j * dim + d];
              const double t = w * r * inv[d];
              if (!gin[0].empty()) gin[0][i * dim + d] -= t;
              if (!gin[1].empty()) gin[1][j * dim + d] += t;
              if (!gin[2].empty()) gin[2][d] += t * r / (*lss)[d];
            }
          }
      });
}

Tensor sample_frequencies(const Tensor& ls, std::size_t features, Rng& rng) {
  if (features == 0) throw ContractError("sample_frequencies needs at least one feature");
  const std::size_t dim = ls.size();
  Tensor eps(ad::Shape::matrix(features, dim), standard_normals(rng, features * dim));
  return ad::scale_cols(eps, ad::div(Tensor::scalar(1.0), ls));
}

Tensor feature_map(const Tensor& x, const Tensor& omega, const Tensor& sf2) {
  if (x.cols() != omega.cols())
    throw DimensionError("feature_map: state dimension " + std::to_string(x.cols()) +
                         " vs frequency dimension " + std::to_string(omega.cols()));
  const double f = static_cast<double>(omega.rows());
  auto proj = ad::matmul(x.shape().rank == 1 ? ad::reshape(x, ad::Shape::matrix(1, x.size())) : x,
                         ad::transpose(omega));
  auto amp = ad::sqrt(ad::scale(sf2, 1.0 / f));
  return ad::mul(amp, ad::concat_cols(ad::cos(proj), ad::sin(proj)));
}

}  // namespace gpode::kernel
