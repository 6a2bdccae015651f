#include "gpode/models/init.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <set>

#include "gpode/error.hpp"

namespace gpode::models {
namespace {

double sqdist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

std::size_t distinct_rows(const std::vector<double>& v, std::size_t d) {
  std::set<std::vector<double>> seen;
  for (std::size_t i = 0; i < v.size(); i += d) seen.emplace(v.begin() + i, v.begin() + i + d);
  return seen.size();
}

// Moves repeated rows off their twins so that k-means++ can seed distinct centres.
void separate_duplicates(std::vector<double>& v, std::size_t d, Rng& rng) {
  std::set<std::vector<double>> seen;
  std::size_t moved = 0;
  for (std::size_t i = 0; i < v.size(); i += d) {
    std::vector<double> r(v.begin() + i, v.begin() + i + d);
    if (seen.insert(r).second) continue;
    auto eps = standard_normals(rng, d);
    for (std::size_t k = 0; k < d; ++k) v[i + k] += 1e-6 * eps[k];
    ++moved;
  }
  if (moved) std::clog << "warning: perturbed " << moved << " duplicate observations before k-means\n";
}

Tensor solve_chol(const Tensor& l, const Tensor& b) {
  return ad::solve_lower_transposed(l, ad::solve_lower(l, b));
}

}  // namespace

Tensor kmeans(const Tensor& points, std::size_t k, std::size_t iterations, Rng& rng) {
  const std::size_t n = points.rows(), d = points.cols();
  const std::vector<double> x(points.values().begin(), points.values().end());
  if (k == 0 || distinct_rows(x, d) < k)
    throw ContractError("kmeans needs at least " + std::to_string(k) + " distinct points");

  std::vector<double> c;
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  const std::size_t i0 = first(rng);
  c.insert(c.end(), x.begin() + i0 * d, x.begin() + (i0 + 1) * d);
  std::vector<double> near(n, std::numeric_limits<double>::infinity());
  for (std::size_t j = 1; j < k; ++j) {
    const double* last = c.data() + (j - 1) * d;
    for (std::size_t i = 0; i < n; ++i) near[i] = std::min(near[i], sqdist(&x[i * d], last, d));
    std::discrete_distribution<std::size_t> pick(near.begin(), near.end());
    const std::size_t i = pick(rng);
    c.insert(c.end(), x.begin() + i * d, x.begin() + (i + 1) * d);
  }

  std::vector<std::size_t> label(n);
  std::vector<double> acc(k * d);
  std::vector<std::size_t> count(k);
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        const double s = sqdist(&x[i * d], &c[j * d], d);
        if (s < best) best = s, label[i] = j;
      }
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++count[label[i]];
      for (std::size_t q = 0; q < d; ++q) acc[label[i] * d + q] += x[i * d + q];
    }
    // Empty clusters keep their previous centre.
    for (std::size_t j = 0; j < k; ++j)
      if (count[j])
        for (std::size_t q = 0; q < d; ++q) c[j * d + q] = acc[j * d + q] / static_cast<double>(count[j]);
  }
  return Tensor::matrix(k, d, std::move(c));
}

Tensor interpolate_gradients(const Trajectory& traj, const Tensor& z, const KernelHyper& hyper, double nugget,
                             double noise_variance) {
  const std::size_t n = traj.size(), d = traj.dim;
  const auto& y = traj.values;
  std::vector<double> grads((n - 1) * d), resid(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double dt = traj.times[i + 1] - traj.times[i];
    resid[i] = 2.0 * noise_variance / (dt * dt);
    for (std::size_t k = 0; k < d; ++k) grads[i * d + k] = (y[(i + 1) * d + k] - y[i * d + k]) / dt;
  }
  const Tensor locs = Tensor::matrix(n - 1, d, std::vector<double>(y.begin(), y.end() - static_cast<long>(d)));
  const Tensor g = Tensor::matrix(n - 1, d, std::move(grads));
  const auto ls = hyper.lengthscales().detach();
  const auto sf2 = hyper.signal_variance().detach();
  auto kyy = ad::add_diag(kernel::gram(locs, locs, ls, sf2), ad::scale(sf2, nugget));
  std::vector<double> k(kyy.values().begin(), kyy.values().end());
  for (std::size_t i = 0; i + 1 < n; ++i) k[i * (n - 1) + i] += resid[i];
  kyy = Tensor::matrix(n - 1, n - 1, std::move(k));
  return ad::matmul(kernel::gram(z, locs, ls, sf2), solve_chol(ad::cholesky(kyy), g));
}

InducingSet init_inducing(const Trajectory& traj, const KernelHyper& hyper, std::size_t m, Rng& rng,
                          double nugget, double noise_variance) {
  traj.validate();
  const std::size_t n = traj.size(), d = traj.dim;
  if (m == 0 || m + 1 > n)
    throw ContractError("inducing count must lie in [1, N-1]; got M=" + std::to_string(m) + " for N=" +
                        std::to_string(n));
  Trajectory data = traj;
  if (distinct_rows(data.values, d) < n) separate_duplicates(data.values, d, rng);
  auto z = kmeans(Tensor::matrix(n, d, data.values), m, 25, rng);
  auto u = interpolate_gradients(data, z, hyper, nugget, noise_variance);

  KernelHyper fixed{hyper.raw_lengthscales.detach(), hyper.raw_signal_variance.detach()};
  auto whitened = ad::solve_lower(gpfield::prior_cholesky(z, fixed), u);
  return InducingSet::from_values(z, ad::transpose(whitened));
}

Model init_model(const Trajectory& traj, const InitOptions& opt, Rng& rng) {
  traj.validate();
  const std::size_t n = traj.size(), d = traj.dim;
  if (n < 2) throw ContractError("initialization needs at least two observations");
  if (opt.shooting != 1 && opt.shooting != n)
    throw ContractError("state posterior count must be 1 or N");

  std::vector<double> ls(d);
  double var_sum = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += traj.values[i * d + k] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) sq += std::pow(traj.values[i * d + k] - mean, 2);
    const double var = sq / static_cast<double>(n - 1);
    ls[k] = std::max(1.25 * std::sqrt(var), 1e-3);
    var_sum += var;
  }

  Model model;
  model.features = opt.features;
  model.hyper = KernelHyper::from_values(ls, 1.0);
  const double noise = 0.1 * var_sum / static_cast<double>(d);
  model.inducing = init_inducing(traj, model.hyper, opt.inducing, rng, opt.nugget, noise);

  std::vector<double> means(opt.shooting * d);
  for (std::size_t i = 0; i < opt.shooting; ++i) {
    const std::size_t src = i == 0 ? 0 : i - 1;
    std::copy_n(traj.values.begin() + static_cast<long>(src * d), d, means.begin() + static_cast<long>(i * d));
  }
  model.states = StatePosterior::from_values(Tensor::matrix(opt.shooting, d, std::move(means)), opt.state_stddev,
                                             opt.form);
  model.noise = NoiseModel::from_values(noise);
  return model;
}

}  // namespace gpode::models
