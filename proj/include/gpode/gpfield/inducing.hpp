#pragma once

#include <vector>

#include "gpode/autodiff/ops.hpp"
#include "gpode/kernel/se_ard.hpp"

namespace gpode::gpfield {

using ad::Tensor;
using kernel::KernelHyper;

// Relative jitter added to the diagonal of K_ZZ before factorization.
inline constexpr double kJitter = 1e-6;

// Inducing locations and the whitened Gaussian posterior over inducing values,
// one independent factor per output dimension.
struct InducingSet {
  Tensor z;                  // M x D
  Tensor whitened_mean;      // D x M, row d holds m~_d
  Tensor raw_whitened_chol;  // D x (M*M), row-major lower factors, softplus diagonal

  std::size_t size() const { return z.rows(); }
  std::size_t dim() const { return z.cols(); }
  // Constrained factors L~_d, D x (M*M).
  Tensor whitened_chol() const { return ad::tril_softplus_blocks(raw_whitened_chol, size()); }

  // L~_d = scale * I for all d.
  static InducingSet from_values(const Tensor& z, const Tensor& whitened_mean, double chol_scale = 0.1);
};

// Lower factor of K_ZZ + jitter * sf2 * I.
Tensor prior_cholesky(const Tensor& z, const KernelHyper& hyper);

// Unwhitened inducing means L_theta m~_d as an M x D matrix.
Tensor inducing_mean(const InducingSet& ind, const Tensor& prior_chol);

// sum_d KL[N(m~_d, L~_d L~_d^T) || N(0, I)].
Tensor kl_inducing(const InducingSet& ind);

struct Marginals {
  Tensor mean;                     // Q x D
  std::vector<Tensor> covariance;  // D matrices of Q x Q
};

// Analytic q(f) at query states (Q x D).
Marginals marginal_posterior(const Tensor& xq, const InducingSet& ind, const KernelHyper& hyper);

}  // namespace gpode::gpfield
