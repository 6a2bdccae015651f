#include "gpode/models/elbo.hpp"

#include <cmath>

#include "gpode/error.hpp"
#include "gpode/gpfield/path.hpp"

namespace gpode::models {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;

void check_inputs(const Trajectory& traj, const Model& model, const ObjectiveOptions& opt) {
  traj.validate();
  if (traj.empty()) throw ContractError("objective needs at least one observation");
  if (traj.dim != model.inducing.dim()) throw DimensionError("trajectory and model dimensions differ");
  if (traj.times.front() < opt.t_start) throw ContractError("observation before the start time");
  if (opt.samples == 0) throw ContractError("sample count must be positive");
  if (model.states.size() == 0) throw ContractError("model has no state posterior");
}

Tensor observations(const Trajectory& traj) {
  return Tensor::matrix(traj.size(), traj.dim, traj.values);
}

// sum log N(y | x, var I) over all entries.
Tensor gaussian_loglik(const Tensor& x, const Tensor& y, const Tensor& var) {
  const double n = static_cast<double>(x.size());
  auto quad = ad::div(ad::sum(ad::square(ad::sub(x, y))), var);
  auto norm = ad::scale(ad::shift(ad::log(var), kLog2Pi), n);
  return ad::scale(ad::add(quad, norm), -0.5);
}

StatePosterior rows_of(const StatePosterior& q, std::size_t begin, std::size_t count) {
  if (begin + count > q.size()) throw ContractError("state posterior row range out of bounds");
  if (begin == 0 && count == q.size()) return q;
  return {ad::slice_rows(q.means, begin, count), ad::slice_rows(q.raw_chol, begin, count), q.form};
}

odeint::Rhs path_rhs(const gpfield::PathSample& p) {
  return {p.params(), [&p](std::span<const Tensor> ps, const Tensor& x) { return p.evaluate(ps, x); }};
}

Tensor state_noise(Rng& rng, std::size_t n, std::size_t d) {
  return Tensor::matrix(n, d, standard_normals(rng, n * d));
}

// ((((L_y + L_sc) + L_se) + L_0) + L_u), skipping absent terms.
Elbo combine(const Tensor& ly, const Tensor& lsc, const Tensor& lse, const Tensor& l0, const Tensor& lu) {
  Elbo out;
  out.value = ly;
  out.terms.likelihood = ly.item();
  if (lsc.defined()) {
    out.value = ad::add(out.value, lsc);
    out.terms.cross_entropy = lsc.item();
  }
  if (lse.defined()) {
    out.value = ad::add(out.value, lse);
    out.terms.entropy = lse.item();
  }
  out.value = ad::add(ad::add(out.value, l0), lu);
  out.terms.initial = l0.item();
  out.terms.inducing = lu.item();
  return out;
}

Tensor average(const Tensor& total, std::size_t samples) {
  return samples == 1 ? total : ad::scale(total, 1.0 / static_cast<double>(samples));
}

}  // namespace

Streams Streams::from_seed(std::uint64_t seed) { return {substream(seed, "path"), substream(seed, "states")}; }

Tensor kl_standard_normal(const StatePosterior& q, std::size_t begin, std::size_t count) {
  auto r = rows_of(q, begin, count);
  auto quad = ad::add(r.chol_frobenius2(), ad::sum(ad::square(r.means)));
  auto logdet = ad::sum(ad::log(r.chol_diag()));
  const double dim = static_cast<double>(count * q.dim());
  return ad::scale(ad::sub(ad::shift(quad, -dim), ad::scale(logdet, 2.0)), 0.5);
}

Tensor gaussian_entropy(const StatePosterior& q, std::size_t begin, std::size_t count) {
  auto r = rows_of(q, begin, count);
  const double dim = static_cast<double>(count * q.dim());
  return ad::shift(ad::sum(ad::log(r.chol_diag())), 0.5 * dim * (1.0 + kLog2Pi));
}

double training_step(const Trajectory& traj, double t_start, std::size_t substeps) {
  if (traj.empty() || substeps == 0) throw ContractError("training step needs observations and substeps");
  return (traj.times.back() - t_start) / static_cast<double>(traj.size()) / static_cast<double>(substeps);
}

Elbo elbo_vanilla(const Trajectory& traj, const Model& model, Streams& rng, const ObjectiveOptions& opt) {
  check_inputs(traj, model, opt);
  const auto q0 = rows_of(model.states, 0, 1);
  const auto y = observations(traj);
  const auto var = model.noise.obs_variance();

  Tensor lik;
  for (std::size_t s = 0; s < opt.samples; ++s) {
    auto path = gpfield::draw_path(model.inducing, model.hyper, model.features, rng.path);
    odeint::IvpRequest req;
    req.x0 = q0.sample(state_noise(rng.states, 1, traj.dim));
    req.t_start = opt.t_start;
    req.times = traj.times;
    req.options = opt.solver;
    auto sol = odeint::solve(path_rhs(path), req);
    auto term = gaussian_loglik(sol.states, y, var);
    lik = lik.defined() ? ad::add(lik, term) : term;
  }
  auto l0 = ad::neg(kl_standard_normal(q0, 0, 1));
  auto lu = ad::neg(gpfield::kl_inducing(model.inducing));
  return combine(average(lik, opt.samples), {}, {}, l0, lu);
}

Elbo elbo_shooting(const Trajectory& traj, const Model& model, Streams& rng, const ObjectiveOptions& opt) {
  check_inputs(traj, model, opt);
  const std::size_t n = traj.size(), d = traj.dim;
  if (model.states.size() != n)
    throw ContractError("shooting needs one state per observation: " + std::to_string(model.states.size()) +
                        " states for " + std::to_string(n) + " observations");
  const auto y = observations(traj);
  const auto var = model.noise.obs_variance();
  const auto xi = Tensor::scalar(model.noise.shooting_variance);

  Tensor lik, cross;
  std::vector<odeint::IvpRequest> reqs(n);
  for (std::size_t s = 0; s < opt.samples; ++s) {
    auto path = gpfield::draw_path(model.inducing, model.hyper, model.features, rng.path);
    auto states = model.states.sample(state_noise(rng.states, n, d));
    for (std::size_t k = 0; k < n; ++k) {
      reqs[k].x0 = ad::row(states, k);
      reqs[k].t_start = k == 0 ? opt.t_start : traj.times[k - 1];
      reqs[k].times = {traj.times[k]};
      reqs[k].options = opt.solver;
    }
    auto sols = odeint::solve_batch(path_rhs(path), reqs, opt.workers);
    std::vector<Tensor> parts;
    parts.reserve(n);
    for (auto& sol : sols) parts.push_back(sol.states);
    auto ends = n == 1 ? parts[0] : ad::concat_rows(parts);
    auto term = gaussian_loglik(ends, y, var);
    lik = lik.defined() ? ad::add(lik, term) : term;
    if (n > 1) {
      auto c = gaussian_loglik(ad::slice_rows(states, 1, n - 1), ad::slice_rows(ends, 0, n - 1), xi);
      cross = cross.defined() ? ad::add(cross, c) : c;
    }
  }
  Tensor entropy;
  if (n > 1) {
    cross = average(cross, opt.samples);
    entropy = gaussian_entropy(model.states, 1, n - 1);
  }
  auto l0 = ad::neg(kl_standard_normal(model.states, 0, 1));
  auto lu = ad::neg(gpfield::kl_inducing(model.inducing));
  return combine(average(lik, opt.samples), cross, entropy, l0, lu);
}

}  // namespace gpode::models
