#pragma once

#include <vector>

#include "gpode/models/elbo.hpp"

namespace gpode::models {

struct Prediction {
  std::vector<double> times;
  std::vector<double> mean;      // K x D
  std::vector<double> variance;  // K x D, includes sigma_y^2
  std::vector<double> fan;       // S' x K x D for the S' draws that completed
  std::size_t dim = 0;
  std::size_t failed = 0;        // draws lost to solver failures
};

struct PredictOptions {
  std::size_t samples = 100;
  double t_start = 0.0;
  odeint::SolverOptions solver;  // dopri5, rtol = atol = 1e-5
};

// Independent path and initial-state draws from q(f) and q(s_0), integrated over `times`.
Prediction predict(const std::vector<double>& times, const Model& model, Streams& rng, const PredictOptions& opt);

// Posterior mean and standard deviation of f at query states (Q x D), each Q x D.
struct FieldSummary {
  std::vector<double> mean, stddev;
};
FieldSummary field_summary(const Tensor& xq, const Model& model);

}  // namespace gpode::models
