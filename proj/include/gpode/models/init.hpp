#pragma once

#include "gpode/models/model.hpp"
#include "gpode/rng.hpp"

namespace gpode::models {

// Lloyd iterations from k-means++ seeds. Rows of `points` (N x D) must hold at least k distinct values.
Tensor kmeans(const Tensor& points, std::size_t k, std::size_t iterations, Rng& rng);

struct InitOptions {
  std::size_t inducing = 16;   // M
  std::size_t features = 256;  // F
  std::size_t shooting = 1;    // number of state posteriors (1 for vanilla, N for shooting)
  CovarianceForm form = CovarianceForm::full;
  double state_stddev = 0.1;
  double nugget = gpfield::kJitter;  // relative to sigma_f^2
};

// GP mean K(Z, Y~) (K(Y~, Y~) + R)^-1 G of the difference quotients G taken at Y~ = y_1..y_{N-1}.
// R is diagonal with nugget * sf2 + 2 noise / dt_i^2, the last term being the variance a
// quotient inherits from observation noise. Returns the unwhitened M x D inducing values.
Tensor interpolate_gradients(const Trajectory& traj, const Tensor& z, const KernelHyper& hyper, double nugget,
                             double noise_variance = 0.0);

// Kmeans locations and whitened GP interpolation of empirical difference quotients.
InducingSet init_inducing(const Trajectory& traj, const KernelHyper& hyper, std::size_t m, Rng& rng,
                          double nugget = gpfield::kJitter, double noise_variance = 0.0);

// Data-driven starting point for every parameter.
Model init_model(const Trajectory& traj, const InitOptions& opt, Rng& rng);

}  // namespace gpode::models
