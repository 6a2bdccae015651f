#include "gpode/gpfield/inducing.hpp"

#include "gpode/error.hpp"

namespace gpode::gpfield {

InducingSet InducingSet::from_values(const Tensor& z, const Tensor& whitened_mean, double chol_scale) {
  const std::size_t m = z.rows(), d = z.cols();
  if (whitened_mean.rows() != d || whitened_mean.cols() != m)
    throw DimensionError("inducing means must be D x M, got " + whitened_mean.shape().str());
  std::vector<double> raw(d * m * m, 0.0);
  const double diag = kernel::softplus_inverse(chol_scale);
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t i = 0; i < m; ++i) raw[k * m * m + i * m + i] = diag;
  return {z, whitened_mean, Tensor(ad::Shape::matrix(d, m * m), std::move(raw))};
}

Tensor prior_cholesky(const Tensor& z, const KernelHyper& hyper) {
  auto sf2 = hyper.signal_variance();
  auto kzz = kernel::gram(z, z, hyper.lengthscales(), sf2);
  return ad::cholesky(ad::add_diag(kzz, ad::scale(sf2, kJitter)));
}

Tensor inducing_mean(const InducingSet& ind, const Tensor& prior_chol) {
  return ad::matmul(prior_chol, ad::transpose(ind.whitened_mean));
}

Tensor kl_inducing(const InducingSet& ind) {
  const std::size_t m = ind.size(), d = ind.dim();
  auto l = ind.whitened_chol();
  auto quad = ad::add(ad::sum(ad::square(l)), ad::sum(ad::square(ind.whitened_mean)));
  auto logdet = ad::sum(ad::log(ad::block_diag(l, m)));
  return ad::scale(ad::sub(ad::shift(quad, -static_cast<double>(d * m)), ad::scale(logdet, 2.0)), 0.5);
}

Marginals marginal_posterior(const Tensor& xq, const InducingSet& ind, const KernelHyper& hyper) {
  if (xq.cols() != ind.dim()) throw DimensionError("marginal_posterior: query dimension mismatch");
  const std::size_t m = ind.size(), d = ind.dim();
  auto ls = hyper.lengthscales();
  auto sf2 = hyper.signal_variance();
  auto chol = prior_cholesky(ind.z, hyper);
  auto kzx = kernel::gram(ind.z, xq, ls, sf2);
  auto kxx = kernel::gram(xq, xq, ls, sf2);
  auto b = ad::solve_lower(chol, kzx);  // M x Q
  Marginals out;
  out.mean = ad::matmul(ad::transpose(b), ad::transpose(ind.whitened_mean));
  auto prior_part = ad::sub(kxx, ad::matmul(ad::transpose(b), b));
  auto lt = ind.whitened_chol();
  for (std::size_t k = 0; k < d; ++k) {
    auto lk = ad::flat_slice(lt, k * m * m, ad::Shape::matrix(m, m));
    auto c = ad::matmul(ad::transpose(lk), b);
    out.covariance.push_back(ad::add(prior_part, ad::matmul(ad::transpose(c), c)));
  }
  return out;
}

}  // namespace gpode::gpfield
