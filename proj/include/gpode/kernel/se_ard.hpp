#pragma once

#include <span>
#include <vector>

#include "gpode/autodiff/ops.hpp"
#include "gpode/rng.hpp"

namespace gpode::kernel {

using ad::Tensor;

double softplus(double x);
double softplus_inverse(double y);

// SE-ARD hyperparameters stored unconstrained; the constrained values are softplus maps.
struct KernelHyper {
  Tensor raw_lengthscales;     // D
  Tensor raw_signal_variance;  // scalar

  static KernelHyper from_values(std::span<const double> lengthscales, double signal_variance);

  std::size_t dim() const { return raw_lengthscales.size(); }
  Tensor lengthscales() const { return ad::softplus(raw_lengthscales); }
  Tensor signal_variance() const { return ad::softplus(raw_signal_variance); }
  std::vector<double> lengthscale_values() const;
  double signal_variance_value() const;
};

// sf2 * exp(-0.5 * sum_d (x_d - y_d)^2 / ls_d^2)
double k(std::span<const double> x, std::span<const double> y, std::span<const double> ls, double sf2);

// N x M matrix of k(x_i, z_j). Differentiable in every argument.
Tensor gram(const Tensor& x, const Tensor& z, const Tensor& ls, const Tensor& sf2);
inline Tensor gram(const Tensor& x, const Tensor& z, const KernelHyper& h) {
  return gram(x, z, h.lengthscales(), h.signal_variance());
}

// F x D frequencies with entry (i, d) ~ N(0, 1 / ls_d^2), built as eps / ls so
// that gradients reach the lengthscales.
Tensor sample_frequencies(const Tensor& ls, std::size_t features, Rng& rng);

// N x 2F random Fourier features sqrt(sf2 / F) [cos(X Omega^T), sin(X Omega^T)].
Tensor feature_map(const Tensor& x, const Tensor& omega, const Tensor& sf2);

}  // namespace gpode::kernel
