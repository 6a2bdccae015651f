#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "gpode/gpfield/inducing.hpp"
#include "gpode/gpfield/path.hpp"
#include "support.hpp"

using namespace gpode;
using namespace gpode::gpfield;
using ad::Shape;
using ad::Tape;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd dense(const Tensor& t) {
  MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t(i, j);
  return m;
}

MatrixXd dense_gram(const MatrixXd& a, const MatrixXd& b, const std::vector<double>& ls, double sf2) {
  MatrixXd g(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.rows(); ++j) {
      double s = 0;
      for (int d = 0; d < a.cols(); ++d) s += std::pow((a(i, d) - b(j, d)) / ls[d], 2);
      g(i, j) = sf2 * std::exp(-0.5 * s);
    }
  return g;
}

struct Setup {
  KernelHyper hyper;
  InducingSet ind;
  std::vector<double> ls;
  double sf2;
};

// Random well-spread instance with a non-trivial whitened posterior.
Setup random_setup(std::size_t m, std::size_t d, std::uint64_t seed, double spread = 1.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.6, 1.6);
  std::vector<double> ls(d);
  for (auto& l : ls) l = u(rng);
  const double sf2 = u(rng);
  auto z = testing::random_tensor(Shape::matrix(m, d), rng, spread);
  auto mean = testing::random_tensor(Shape::matrix(d, m), rng, 0.7);
  auto ind = InducingSet::from_values(z, mean, 0.5);
  auto raw = testing::random_tensor(Shape::matrix(d, m * m), rng, 0.3);
  std::vector<double> rv(raw.values().begin(), raw.values().end());
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t i = 0; i < m; ++i) rv[k * m * m + i * m + i] -= 0.5;
  ind.raw_whitened_chol = Tensor(Shape::matrix(d, m * m), rv);
  return {KernelHyper::from_values(ls, sf2), ind, ls, sf2};
}

MatrixXd block(const Tensor& blocks, std::size_t k, std::size_t m) {
  MatrixXd l(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) l(i, j) = blocks(k, i * m + j);
  return l;
}

}  // namespace

TEST_CASE("inducing KL closed forms") {
  auto z = Tensor::matrix(3, 2, {0, 0, 1, 0, 0, 1});
  auto ind = InducingSet::from_values(z, Tensor::zeros(Shape::matrix(2, 3)), 1.0);
  CHECK(std::abs(kl_inducing(ind).item()) < 1e-14);

  auto one = InducingSet::from_values(Tensor::matrix(1, 1, {0.0}), Tensor::matrix(1, 1, {1.0}), 1.0);
  CHECK(kl_inducing(one).item() == doctest::Approx(0.5).epsilon(1e-12));

  double prev = 1e300;
  for (double s : {2.0, 1.5, 1.0, 0.5, 0.1}) {
    auto m = Tensor::matrix(2, 3, {s, -s, s, 0.5 * s, s, -s});
    double kl = kl_inducing(InducingSet::from_values(z, m, 1.0)).item();
    CHECK(kl < prev);
    CHECK(kl >= 0.0);
    prev = kl;
  }
}

TEST_CASE("whitened KL equals the unwhitened KL") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = random_setup(5, 2, seed);
    const std::size_t m = 5;
    MatrixXd l = dense(prior_cholesky(s.ind.z, s.hyper));
    MatrixXd k = l * l.transpose();
    auto lt = s.ind.whitened_chol();
    double kl = 0;
    Eigen::LLT<MatrixXd> kf(k);
    for (std::size_t d = 0; d < 2; ++d) {
      VectorXd mt(m);
      for (std::size_t i = 0; i < m; ++i) mt(i) = s.ind.whitened_mean(d, i);
      VectorXd mu = l * mt;
      MatrixXd lw = l * block(lt, d, m);
      MatrixXd cov = lw * lw.transpose();
      Eigen::LLT<MatrixXd> cf(cov);
      const double logdet_k = 2 * kf.matrixL().toDenseMatrix().diagonal().array().log().sum();
      const double logdet_c = 2 * cf.matrixL().toDenseMatrix().diagonal().array().log().sum();
      kl += 0.5 * ((kf.solve(cov)).trace() + mu.dot(kf.solve(mu)) - m + logdet_k - logdet_c);
    }
    CHECK(std::abs(kl_inducing(s.ind).item() - kl) < 1e-8);
  }
}

TEST_CASE("marginal posterior against the dense formula") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto s = random_setup(5, 2, 40 + seed);
    std::mt19937_64 rng(seed);
    auto xq = testing::random_tensor(Shape::matrix(3, 2), rng);
    auto post = marginal_posterior(xq, s.ind, s.hyper);
    MatrixXd z = dense(s.ind.z), x = dense(xq);
    MatrixXd kzz = dense_gram(z, z, s.ls, s.sf2) + 1e-6 * s.sf2 * MatrixXd::Identity(5, 5);
    MatrixXd a = dense_gram(x, z, s.ls, s.sf2) * kzz.inverse();
    MatrixXd l = kzz.llt().matrixL();
    auto lt = s.ind.whitened_chol();
    for (std::size_t d = 0; d < 2; ++d) {
      VectorXd mt(5);
      for (int i = 0; i < 5; ++i) mt(i) = s.ind.whitened_mean(d, i);
      VectorXd mean = a * (l * mt);
      MatrixXd lw = l * block(lt, d, 5);
      MatrixXd cov = dense_gram(x, x, s.ls, s.sf2) - a * kzz * a.transpose() + a * (lw * lw.transpose()) * a.transpose();
      for (int i = 0; i < 3; ++i) {
        CHECK(post.mean(i, d) == doctest::Approx(mean(i)).epsilon(1e-8));
        for (int j = 0; j < 3; ++j) CHECK(std::abs(post.covariance[d](i, j) - cov(i, j)) < 1e-8);
      }
    }
  }
}

TEST_CASE("marginal posterior limits") {
  auto s = random_setup(4, 2, 7);
  auto ind = InducingSet::from_values(s.ind.z, s.ind.whitened_mean, 1e-9);
  auto post = marginal_posterior(ind.z, ind, s.hyper);
  auto umean = inducing_mean(ind, prior_cholesky(ind.z, s.hyper));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t d = 0; d < 2; ++d) {
      CHECK(post.mean(i, d) == doctest::Approx(umean(i, d)).epsilon(1e-5));
      CHECK(std::abs(post.covariance[d](i, i)) <= 1e-6);
    }

  auto far = Tensor::matrix(1, 2, {1e3, -1e3});
  auto pf = marginal_posterior(far, s.ind, s.hyper);
  for (std::size_t d = 0; d < 2; ++d) {
    CHECK(std::abs(pf.mean(0, d)) < 1e-6);
    CHECK(std::abs(pf.covariance[d](0, 0) - s.sf2) < 1e-6);
  }
}

TEST_CASE("marginal variance stays in range") {
  // The upper bound needs q(U) no wider than the prior in whitened coordinates.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = random_setup(6, 2, 60 + seed);
    std::mt19937_64 rng(seed);
    auto xq = testing::random_tensor(Shape::matrix(20, 2), rng, 2.0);
    auto ind = InducingSet::from_values(s.ind.z, s.ind.whitened_mean, 0.1 * static_cast<double>(seed % 10 + 1));
    auto post = marginal_posterior(xq, ind, s.hyper);
    for (std::size_t d = 0; d < 2; ++d)
      for (std::size_t i = 0; i < 20; ++i) {
        const double v = post.covariance[d](i, i);
        CHECK(v >= -1e-12);
        CHECK(v <= s.sf2 + 1e-6);
      }
  }
}

TEST_CASE("marginal posterior gradients") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = random_setup(3, 2, 80 + seed);
    std::mt19937_64 rng(seed);
    auto xq = testing::random_tensor(Shape::matrix(2, 2), rng);
    std::vector<Tensor> in{s.ind.z, s.ind.whitened_mean, s.ind.raw_whitened_chol, s.hyper.raw_lengthscales,
                           s.hyper.raw_signal_variance};
    auto rep = testing::fd_check(
        [&](Tape&, const std::vector<Tensor>& p) {
          InducingSet ind{p[0], p[1], p[2]};
          KernelHyper h{p[3], p[4]};
          auto post = marginal_posterior(xq, ind, h);
          return ad::sum(ad::sin(post.mean)) + ad::sum(ad::square(post.covariance[0])) +
                 ad::sum(post.covariance[1]) + kl_inducing(ind);
        },
        in);
    CAPTURE(rep.where);
    CHECK(rep.worst_rel < 1e-4);
  }
}

TEST_CASE("paths interpolate the inducing draw") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = random_setup(8, 2, 100 + seed);
    Rng rng(seed);
    auto path = draw_path(s.ind, s.hyper, 256, rng);
    auto at_z = eval_path(path, s.ind.z);
    double worst = 0;
    for (std::size_t i = 0; i < at_z.size(); ++i) worst = std::max(worst, std::abs(at_z[i] - path.u[i]));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("path draws are deterministic") {
  auto s = random_setup(5, 2, 3);
  Rng a(42), b(42);
  auto p1 = draw_path(s.ind, s.hyper, 64, a);
  auto p2 = draw_path(s.ind, s.hyper, 64, b);
  auto x = Tensor::matrix(2, 2, {0.1, 0.2, -1.0, 0.5});
  auto f1 = eval_path(p1, x), f2 = eval_path(p2, x);
  for (std::size_t i = 0; i < f1.size(); ++i) CHECK(f1[i] == f2[i]);
}

TEST_CASE("correction decays far from the inducing points") {
  auto s = random_setup(5, 2, 4);
  Rng rng(1);
  auto p = draw_path(s.ind, s.hyper, 32, rng);
  auto zeros = std::make_shared<const std::vector<double>>(p.wc_t->size(), 0.0);
  p.wc_t = zeros;
  p.ws_t = zeros;
  auto f = eval_path(p, Tensor::matrix(1, 2, {50.0, -60.0}));
  CHECK(std::abs(f[0]) < 1e-12);
  CHECK(std::abs(f[1]) < 1e-12);
}

TEST_CASE("path evaluation matches the dense Matheron update") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto s = random_setup(6, 2, 200 + seed);
    Rng rng(seed);
    const std::size_t F = 40;
    auto p = draw_path(s.ind, s.hyper, F, rng);
    std::mt19937_64 r2(seed);
    auto xq = testing::random_tensor(Shape::matrix(4, 2), r2);
    MatrixXd z = dense(s.ind.z), x = dense(xq), u = dense(p.u), om = dense(p.omega);
    // Prior draw through explicit features.
    auto prior = [&](const MatrixXd& pts) {
      MatrixXd out = MatrixXd::Zero(pts.rows(), 2);
      for (int i = 0; i < pts.rows(); ++i)
        for (std::size_t f = 0; f < F; ++f) {
          double pr = 0;
          for (int d = 0; d < 2; ++d) pr += pts(i, d) * om(f, d);
          for (int d = 0; d < 2; ++d)
            out(i, d) += std::sqrt(s.sf2 / F) * ((*p.wc_t)[d * F + f] * std::cos(pr) + (*p.ws_t)[d * F + f] * std::sin(pr));
        }
      return out;
    };
    MatrixXd kzz = dense_gram(z, z, s.ls, s.sf2);
    MatrixXd expect = prior(x) + dense_gram(x, z, s.ls, s.sf2) * kzz.ldlt().solve(u - prior(z));
    auto got = eval_path(p, xq);
    for (int i = 0; i < 4; ++i)
      for (int d = 0; d < 2; ++d) CHECK(got(i, d) == doctest::Approx(expect(i, d)).epsilon(1e-6));
  }
}

TEST_CASE("path gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = random_setup(3, 2, 300 + seed);
    std::mt19937_64 r2(seed);
    auto xq = testing::random_tensor(Shape::matrix(2, 2), r2);
    std::vector<Tensor> in{s.ind.z, s.ind.whitened_mean, s.ind.raw_whitened_chol, s.hyper.raw_lengthscales,
                           s.hyper.raw_signal_variance, xq};
    auto rep = testing::fd_check(
        [&](Tape&, const std::vector<Tensor>& p) {
          InducingSet ind{p[0], p[1], p[2]};
          KernelHyper h{p[3], p[4]};
          Rng rng(seed);
          auto path = draw_path(ind, h, 16, rng);
          return ad::sum(ad::sin(eval_path(path, p[5])));
        },
        in);
    CAPTURE(rep.where);
    CHECK(rep.worst_rel < 1e-4);
  }
}
