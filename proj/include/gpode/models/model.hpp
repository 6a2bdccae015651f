#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpode/gpfield/inducing.hpp"
#include "gpode/systems/trajectory.hpp"

namespace gpode::models {

using ad::Tensor;
using gpfield::InducingSet;
using kernel::KernelHyper;
using systems::Trajectory;

enum class CovarianceForm { full, diagonal };

// Gaussian posteriors q(s_i) = N(a_i, L_i L_i^T), one row per state.
struct StatePosterior {
  Tensor means;     // N x D
  Tensor raw_chol;  // N x (D*D) lower factors (full) or N x D (diagonal), softplus diagonal
  CovarianceForm form = CovarianceForm::full;

  std::size_t size() const { return means.rows(); }
  std::size_t dim() const { return means.cols(); }
  // Positive diagonals of the factors, N x D.
  Tensor chol_diag() const;
  // a_i + L_i eps_i for eps of shape N x D.
  Tensor sample(const Tensor& eps) const;
  // sum_i ||L_i||_F^2 over all rows, as needed by the Gaussian KL.
  Tensor chol_frobenius2() const;

  static StatePosterior from_values(const Tensor& means, double stddev, CovarianceForm form);
};

// sigma_y^2 is trainable through softplus; sigma_xi^2 is a fixed constant.
struct NoiseModel {
  Tensor raw_obs_variance;
  double shooting_variance = 1e-6;

  Tensor obs_variance() const { return ad::softplus(raw_obs_variance); }
  static NoiseModel from_values(double obs_variance, double shooting_variance = 1e-6);
};

// Every trainable quantity of a GP-ODE.
struct Model {
  InducingSet inducing;
  KernelHyper hyper;
  StatePosterior states;
  NoiseModel noise;
  std::size_t features = 256;

  // Trainable tensors in a fixed order matching param_names().
  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;
  static const std::vector<std::string>& param_names();
};

}  // namespace gpode::models
