#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "gpode/autodiff/ops.hpp"

namespace gpode::odeint {

using ad::Tensor;

// Autonomous right-hand side evaluated on a batch of states (B x D -> B x D).
// The parameters are passed explicitly so a solver can rebind them to copies
// living on another tape.
struct Rhs {
  std::vector<Tensor> params;
  std::function<Tensor(std::span<const Tensor> params, const Tensor& x)> eval;

  Tensor operator()(const Tensor& x) const { return eval(params, x); }
};

enum class Method { rk4, dopri5 };

struct SolverOptions {
  Method method = Method::dopri5;
  double dt = 0.01;  // rk4 step bound
  double rtol = 1e-5;
  double atol = 1e-5;
  std::size_t max_steps = 100000;
};

struct IvpRequest {
  Tensor x0;                  // D or 1 x D
  double t_start = 0.0;
  std::vector<double> times;  // strictly increasing, first >= t_start
  SolverOptions options;
};

struct IvpSolution {
  Tensor states;  // K x D, one row per output time
  std::size_t steps = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

IvpSolution solve(const Rhs& rhs, const IvpRequest& req);

// Requests sharing one rhs. rk4 requests with the same step pattern advance in
// lockstep as one batch; results equal those of solve() bitwise. Batches of more
// than one request are split into up to 8 contiguous shards that record on their
// own tapes and run on up to `workers` threads; the shards are merged into the
// caller's tape in a fixed order, so gradients do not depend on `workers`.
std::vector<IvpSolution> solve_batch(const Rhs& rhs, std::span<const IvpRequest> reqs, std::size_t workers = 1);

// Number of equal rk4 steps used for an interval of the given length.
std::size_t rk4_steps(double length, double dt);

}  // namespace gpode::odeint
