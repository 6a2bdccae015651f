#include "gpode/models/predict.hpp"

#include <cmath>
#include <iostream>

#include "gpode/error.hpp"
#include "gpode/gpfield/path.hpp"

namespace gpode::models {

Prediction predict(const std::vector<double>& times, const Model& model, Streams& rng, const PredictOptions& opt) {
  if (opt.samples == 0) throw ContractError("prediction needs at least one sample");
  const std::size_t d = model.inducing.dim(), k = times.size();
  StatePosterior q0{ad::slice_rows(model.states.means, 0, 1), ad::slice_rows(model.states.raw_chol, 0, 1),
                    model.states.form};

  Prediction out;
  out.times = times;
  out.dim = d;
  for (std::size_t s = 0; s < opt.samples; ++s) {
    auto path = gpfield::draw_path(model.inducing, model.hyper, model.features, rng.path);
    odeint::IvpRequest req;
    req.x0 = q0.sample(Tensor::matrix(1, d, standard_normals(rng.states, d)));
    req.t_start = opt.t_start;
    req.times = times;
    req.options = opt.solver;
    odeint::Rhs rhs{path.params(), [&path](std::span<const Tensor> ps, const Tensor& x) {
                      return path.evaluate(ps, x);
                    }};
    try {
      auto sol = odeint::solve(rhs, req);
      out.fan.insert(out.fan.end(), sol.states.values().begin(), sol.states.values().end());
    } catch (const NumericalError&) {
      ++out.failed;
    }
  }
  const std::size_t ok = opt.samples - out.failed;
  if (ok == 0) throw NumericalError("every prediction sample failed to integrate");
  if (10 * out.failed > opt.samples)
    std::clog << "warning: " << out.failed << " of " << opt.samples << " prediction samples diverged\n";

  const double noise = model.noise.obs_variance().item();
  out.mean.assign(k * d, 0.0);
  out.variance.assign(k * d, 0.0);
  for (std::size_t s = 0; s < ok; ++s)
    for (std::size_t i = 0; i < k * d; ++i) out.mean[i] += out.fan[s * k * d + i];
  for (auto& v : out.mean) v /= static_cast<double>(ok);
  for (std::size_t s = 0; s < ok; ++s)
    for (std::size_t i = 0; i < k * d; ++i) {
      const double r = out.fan[s * k * d + i] - out.mean[i];
      out.variance[i] += r * r;
    }
  for (auto& v : out.variance) v = v / static_cast<double>(ok) + noise;
  return out;
}

FieldSummary field_summary(const Tensor& xq, const Model& model) {
  auto marg = gpfield::marginal_posterior(xq, model.inducing, model.hyper);
  const std::size_t q = xq.rows(), d = model.inducing.dim();
  FieldSummary out;
  out.mean.assign(marg.mean.values().begin(), marg.mean.values().end());
  out.stddev.resize(q * d);
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t i = 0; i < q; ++i)
      out.stddev[i * d + k] = std::sqrt(std::max(marg.covariance[k](i, i), 0.0));
  return out;
}

}  // namespace gpode::models
