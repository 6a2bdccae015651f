#include "gpode/gpfield/path.hpp"

#include <cmath>

#include "gpode/error.hpp"
#include "gpode/simd/kernels.hpp"

namespace gpode::gpfield {
namespace {

// Scratch kept alive by backward closures; left uninitialized since kernels overwrite it.
using Buffer = std::shared_ptr<double[]>;
Buffer scratch(std::size_t n) { return Buffer(new double[n]); }

Tensor as_rows(const Tensor& x) {
  return x.shape().rank == 2 ? x : ad::reshape(x, ad::Shape::matrix(1, x.size()));
}

// Correction refinement steps against the unjittered Gram matrix.
constexpr int kRefineSteps = 2;

Tensor solve_chol(const Tensor& l, const Tensor& b) {
  return ad::solve_lower_transposed(l, ad::solve_lower(l, b));
}

// Draws Omega and W and fills the prior half of the path.
PathSample assemble(const InducingSet& ind, const KernelHyper& hyper, std::size_t features, Rng& rng) {
  const std::size_t d = ind.dim();
  PathSample p;
  p.lengthscales = hyper.lengthscales();
  p.signal_variance = hyper.signal_variance();
  p.omega = kernel::sample_frequencies(p.lengthscales, features, rng);
  auto w = standard_normals(rng, 2 * features * d);
  auto wc = std::make_shared<std::vector<double>>(d * features);
  auto ws = std::make_shared<std::vector<double>>(d * features);
  for (std::size_t f = 0; f < features; ++f)
    for (std::size_t k = 0; k < d; ++k) {
      (*wc)[k * features + f] = w[f * d + k];
      (*ws)[k * features + f] = w[(features + f) * d + k];
    }
  p.wc_t = wc;
  p.ws_t = ws;
  p.omega_t = ad::transpose(p.omega);
  p.amplitude = ad::sqrt(ad::scale(p.signal_variance, 1.0 / static_cast<double>(features)));
  p.z_t = ad::transpose(ind.z);
  return p;
}

struct Prior {
  Tensor kzz, chol;
};

Prior prior_factor(const InducingSet& ind, const PathSample& p) {
  auto kzz = kernel::gram(ind.z, ind.z, p.lengthscales, p.signal_variance);
  return {kzz, ad::cholesky(ad::add_diag(kzz, ad::scale(p.signal_variance, kJitter)))};
}

// Solves for the correction once p.u is set.
void finish(PathSample& p, const InducingSet& ind, const Prior& prior) {
  const auto& [kzz, chol] = prior;
  auto prior_at_z = rff_eval(ind.z, p.omega_t, p.amplitude, p.wc_t, p.ws_t, ind.dim());
  auto resid = ad::sub(p.u, prior_at_z);
  auto nu = solve_chol(chol, resid);
  for (int it = 0; it < kRefineSteps; ++it)
    nu = ad::add(nu, solve_chol(chol, ad::sub(resid, ad::matmul(kzz, nu))));
  p.nu = nu;
  p.nu_t = ad::transpose(nu);
}

}  // namespace

std::vector<Tensor> PathSample::params() const {
  return {omega_t, amplitude, z_t, nu_t, lengthscales, signal_variance};
}

Tensor PathSample::evaluate(std::span<const Tensor> ps, const Tensor& x) const {
  auto xr = as_rows(x);
  if (xr.cols() != dim())
    throw DimensionError("eval_path: state of dimension " + std::to_string(xr.cols()) + " for a field of dimension " +
                         std::to_string(dim()));
  auto prior = rff_eval(xr, ps[0], ps[1], wc_t, ws_t, dim());
  auto update = se_eval(xr, ps[2], ps[3], ps[4], ps[5]);
  return ad::add(prior, update);
}

Tensor eval_path(const PathSample& path, const Tensor& x) {
  auto ps = path.params();
  return path.evaluate(ps, x);
}

PathSample draw_path(const InducingSet& ind, const KernelHyper& hyper, std::size_t features, Rng& rng) {
  PathSample p = assemble(ind, hyper, features, rng);
  const auto prior = prior_factor(ind, p);
  const std::size_t d = ind.dim(), m = ind.size();
  Tensor eps(ad::Shape::matrix(d, m), standard_normals(rng, d * m));
  auto v = ad::add(ind.whitened_mean, ad::block_matvec(ind.whitened_chol(), eps));
  p.u = ad::matmul(prior.chol, ad::transpose(v));
  finish(p, ind, prior);
  return p;
}

PathSample draw_path_given(const Tensor& u, const InducingSet& ind, const KernelHyper& hyper,
                           std::size_t features, Rng& rng) {
  if (u.rows() != ind.size() || u.cols() != ind.dim())
    throw DimensionError("draw_path_given: inducing values must be M x D");
  PathSample p = assemble(ind, hyper, features, rng);
  p.u = u;
  finish(p, ind, prior_factor(ind, p));
  return p;
}

Tensor rff_eval(const Tensor& x, const Tensor& omega_t, const Tensor& amplitude,
                std::shared_ptr<const std::vector<double>> wc_t, std::shared_ptr<const std::vector<double>> ws_t,
                std::size_t outputs) {
  const std::size_t rows = x.rows(), dim = x.cols(), features = omega_t.cols();
  if (omega_t.rows() != dim) throw DimensionError("rff_eval: frequency dimension mismatch");
  const auto& kt = simd::kernels();
  Buffer trig = scratch(2 * rows * features);  // cos block then sin block
  std::vector<double> out(rows * outputs);
  simd::RffArgs args{x.values().data(), rows, dim, omega_t.values().data(), features,
                     wc_t->data(),      ws_t->data(), outputs, amplitude[0]};
  kt.rff_forward(args, out.data(), trig.get(), trig.get() + rows * features);
  return ad::record(ad::Shape::matrix(rows, outputs), std::move(out), {x, omega_t, amplitude},
                    [xs = x.storage(), os = omega_t.storage(), scale = amplitude[0], wc_t, ws_t, trig, rows,
                     dim, features, outputs,
                     &kt](std::span<const double> g, std::span<const std::span<double>> gin) {
                      simd::RffArgs a{xs->data(), rows, dim, os->data(), features,
                                      wc_t->data(), ws_t->data(), outputs, scale};
                      simd::RffGrads gr{gin[0].empty() ? nullptr : gin[0].data(),
                                        gin[1].empty() ? nullptr : gin[1].data(),
                                        gin[2].empty() ? nullptr : gin[2].data()};
                      kt.rff_backward(a, g.data(), trig.get(), trig.get() + rows * features, gr);
                    });
}

Tensor se_eval(const Tensor& x, const Tensor& z_t, const Tensor& nu_t, const Tensor& ls, const Tensor& sf2) {
  const std::size_t rows = x.rows(), dim = x.cols(), points = z_t.cols(), outputs = nu_t.rows();
  if (z_t.rows() != dim || ls.size() != dim || nu_t.cols() != points)
    throw DimensionError("se_eval: inconsistent shapes");
  const auto& kt = simd::kernels();
  Buffer q_buf = scratch(rows * points);
  std::vector<double> out(rows * outputs);
  simd::SeArgs args{x.values().data(), rows, dim, z_t.values().data(), points,
                    nu_t.values().data(), outputs, ls.values().data(), sf2[0]};
  kt.se_forward(args, out.data(), q_buf.get());
  return ad::record(ad::Shape::matrix(rows, outputs), std::move(out), {x, z_t, nu_t, ls, sf2},
                    [xs = x.storage(), zs = z_t.storage(), ns = nu_t.storage(), lss = ls.storage(),
                     s2 = sf2[0], q_buf, rows, dim, points, outputs,
                     &kt](std::span<const double> g, std::span<const std::span<double>> gin) {
                      simd::SeArgs a{xs->data(), rows, dim, zs->data(), points,
                                     ns->data(), outputs, lss->data(), s2};
                      auto ptr = [&](std::size_t k) { return gin[k].empty() ? nullptr : gin[k].data(); };
                      simd::SeGrads gr{ptr(0), ptr(1), ptr(2), ptr(3), ptr(4)};
                      kt.se_backward(a, g.data(), q_buf.get(), gr);
                    });
}

}  // namespace gpode::gpfield
