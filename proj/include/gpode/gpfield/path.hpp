#pragma once

#include <memory>
#include <span>
#include <vector>

#include "gpode/gpfield/inducing.hpp"
#include "gpode/rng.hpp"

namespace gpode::gpfield {

// One realized vector field: prior Fourier-feature draw plus Matheron correction.
// Immutable after creation; evaluation is linear in F + M per state.
struct PathSample {
  Tensor omega;      // F x D
  Tensor u;          // M x D inducing-value draw
  Tensor nu;         // M x D correction coefficients

  // Transposed layouts consumed by the evaluation kernels.
  Tensor omega_t;    // D x F
  Tensor amplitude;  // sqrt(sf2 / F)
  Tensor z_t;        // D x M
  Tensor nu_t;       // D x M
  Tensor lengthscales;
  Tensor signal_variance;
  // Fourier weights are constants: wc_t / ws_t are D x F (cos and sin blocks of W^T).
  std::shared_ptr<const std::vector<double>> wc_t, ws_t;

  std::size_t dim() const { return omega.cols(); }
  std::size_t features() const { return omega.rows(); }

  // Tensors the evaluation depends on, in the order expected by `evaluate`.
  std::vector<Tensor> params() const;
  // Evaluates with substituted parameter tensors (same shapes as params()).
  Tensor evaluate(std::span<const Tensor> params, const Tensor& x) const;
};

// Draws Omega, W and U (in that order from rng) and solves for the correction.
PathSample draw_path(const InducingSet& ind, const KernelHyper& hyper, std::size_t features, Rng& rng);

// Same with U supplied (M x D) instead of drawn from q(U). Omega and W are still drawn.
PathSample draw_path_given(const Tensor& u, const InducingSet& ind, const KernelHyper& hyper,
                           std::size_t features, Rng& rng);

// f(x) for x of shape B x D (or a single D-vector); returns B x D.
Tensor eval_path(const PathSample& path, const Tensor& x);

// Differentiable kernel ops behind eval_path.
// scale * (cos(X Omega^T) Wc + sin(X Omega^T) Ws) with Omega^T given as D x F.
Tensor rff_eval(const Tensor& x, const Tensor& omega_t, const Tensor& amplitude,
                std::shared_ptr<const std::vector<double>> wc_t,
                std::shared_ptr<const std::vector<double>> ws_t, std::size_t outputs);
// sum_m k(x, z_m) nu_m with Z^T and nu^T given as D x M and P x M.
Tensor se_eval(const Tensor& x, const Tensor& z_t, const Tensor& nu_t, const Tensor& ls, const Tensor& sf2);

}  // namespace gpode::gpfield
