#pragma once

#include <cstdint>

#include "gpode/models/model.hpp"
#include "gpode/odeint/solve.hpp"
#include "gpode/rng.hpp"

namespace gpode::models {

// Engines for path draws and state draws. Kept apart so that adding shooting
// variables leaves the path draws untouched.
struct Streams {
  Rng path;
  Rng states;

  static Streams from_seed(std::uint64_t seed);
};

struct ObjectiveOptions {
  std::size_t samples = 1;  // S
  double t_start = 0.0;
  odeint::SolverOptions solver{odeint::Method::rk4, 0.01};
  std::size_t workers = 1;
};

// Additive ELBO terms. Absent terms are zero.
struct ElboTerms {
  double likelihood = 0.0;     // L_y
  double cross_entropy = 0.0;  // L_sc
  double entropy = 0.0;        // L_se
  double initial = 0.0;        // L_0 = -KL[q(s_0) || p(s_0)]
  double inducing = 0.0;       // L_u = -KL[q(U) || p(U)]
};

struct Elbo {
  Tensor value;
  ElboTerms terms;
};

// Uses state 0 of model.states as q(x_0) and integrates one IVP over all observation times.
Elbo elbo_vanilla(const Trajectory& traj, const Model& model, Streams& rng, const ObjectiveOptions& opt);

// One shooting variable per observation: s_0 at t_start and s_i at t_i for i >= 1.
Elbo elbo_shooting(const Trajectory& traj, const Model& model, Streams& rng, const ObjectiveOptions& opt);

// KL[N(a, L L^T) || N(0, I)] summed over the given rows.
Tensor kl_standard_normal(const StatePosterior& q, std::size_t begin, std::size_t count);
// Sum of Gaussian entropies over the given rows.
Tensor gaussian_entropy(const StatePosterior& q, std::size_t begin, std::size_t count);

// Mean observation interval divided by substeps.
double training_step(const Trajectory& traj, double t_start, std::size_t substeps);

}  // namespace gpode::models
