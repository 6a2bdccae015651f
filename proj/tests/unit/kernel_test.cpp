#include <cmath>
#include <random>

#include "doctest.h"
#include "gpode/error.hpp"
#include "gpode/kernel/se_ard.hpp"
#include "support.hpp"

using namespace gpode;
using namespace gpode::kernel;
using ad::Shape;
using ad::Tape;

TEST_CASE("pointwise kernel values") {
  std::vector<double> ls{1.0, 1.0};
  std::vector<double> x{0.0, 0.0}, y{1.0, 0.0};
  CHECK(k(x, x, ls, 2.5) == 2.5);
  CHECK(k(x, y, ls, 1.0) == doctest::Approx(0.606531).epsilon(1e-6));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> a{n(rng), n(rng)}, b{n(rng), n(rng)}, l{0.5 + std::abs(n(rng)), 0.5 + std::abs(n(rng))};
    CHECK(k(a, b, l, 1.3) == k(b, a, l, 1.3));
    CHECK(k(a, b, l, 1.3) <= 1.3);
  }
  std::vector<double> three{1, 2, 3};
  CHECK_THROWS_AS(k(x, three, ls, 1.0), DimensionError);
}

TEST_CASE("gram matrix against a naive double loop") {
  // 3 x 2 grid of states
  auto x = Tensor::matrix(6, 2, {0, 0, 1, 0, 2, 0, 0, 1, 1, 1, 2, 1});
  auto ls = Tensor(Shape::vector(2), {1.0, 2.0});
  auto sf2 = Tensor::scalar(1.7);
  auto g = gram(x, x, ls, sf2);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      const double dx = x(i, 0) - x(j, 0), dy = x(i, 1) - x(j, 1);
      const double expect = 1.7 * std::exp(-0.5 * (dx * dx + dy * dy / 4.0));
      CHECK(g(i, j) == doctest::Approx(expect).epsilon(1e-14));
      CHECK(std::abs(g(i, j) - g(j, i)) < 1e-12);
    }
  for (std::size_t i = 0; i < 6; ++i) CHECK(g(i, i) == 1.7);

  auto rep = Tensor::matrix(3, 2, {0.3, -0.2, 0.3, -0.2, 0.3, -0.2});
  auto gr = gram(rep, rep, ls, sf2);
  for (double v : gr.values()) CHECK(v == 1.7);

  CHECK_THROWS_AS(gram(x, Tensor::matrix(1, 3, {0, 0, 0}), ls, sf2), DimensionError);
}

TEST_CASE("gram with jitter factorizes and is symmetric") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = testing::random_tensor(Shape::matrix(12, 2), rng, 0.5);
    auto g = gram(x, x, Tensor(Shape::vector(2), {1.5, 2.5}), Tensor::scalar(1.0));
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 12; ++j) CHECK(std::abs(g(i, j) - g(j, i)) < 1e-12);
    CHECK_NOTHROW(ad::cholesky(ad::add_diag(g, Tensor::scalar(1e-6))));
  }
}

TEST_CASE("gram gradients match finite differences") {
  std::mt19937_64 rng(3);
  for (int draw = 0; draw < 20; ++draw) {
    std::vector<Tensor> in{testing::random_tensor(Shape::matrix(3, 2), rng),
                           testing::random_tensor(Shape::matrix(4, 2), rng),
                           testing::random_tensor(Shape::vector(2), rng),
                           testing::random_tensor(Shape::scalar(), rng)};
    auto rep = testing::fd_check(
        [](Tape&, const std::vector<Tensor>& p) {
          auto g = gram(p[0], p[1], ad::softplus(p[2]), ad::softplus(p[3]));
          return ad::sum(ad::sin(ad::scale(g, 3.0)));
        },
        in);
    CAPTURE(rep.where);
    CHECK(rep.worst_rel < 1e-4);
  }
}

TEST_CASE("frequency sampling") {
  Rng rng(5);
  auto wide = sample_frequencies(Tensor(Shape::vector(1), {1e6}), 10000, rng);
  double ss = 0;
  for (double v : wide.values()) ss += v * v;
  CHECK(std::sqrt(ss / 10000) == doctest::Approx(1e-6).epsilon(0.05));

  auto om = sample_frequencies(Tensor(Shape::vector(1), {2.0}), 100000, rng);
  double m = 0, m2 = 0;
  for (double v : om.values()) {
    m += v;
    m2 += v * v;
  }
  m /= 1e5;
  const double var = m2 / 1e5 - m * m;
  CHECK(std::abs(var - 0.25) < 0.02 * 0.25);

  Rng a(11), b(11);
  auto o1 = sample_frequencies(Tensor(Shape::vector(2), {1.0, 3.0}), 50, a);
  auto o2 = sample_frequencies(Tensor(Shape::vector(2), {1.0, 3.0}), 50, b);
  for (std::size_t i = 0; i < o1.size(); ++i) CHECK(o1[i] == o2[i]);
  CHECK_THROWS(sample_frequencies(Tensor(Shape::vector(1), {1.0}), 0, a));
}

TEST_CASE("feature map") {
  Rng rng(6);
  const double sf2 = 1.9;
  auto ls = Tensor(Shape::vector(2), {0.8, 1.4});
  auto om = sample_frequencies(ls, 64, rng);
  auto phi0 = feature_map(Tensor(Shape::vector(2), {0.0, 0.0}), om, Tensor::scalar(sf2));
  REQUIRE(phi0.size() == 128);
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(phi0[i] == doctest::Approx(std::sqrt(sf2 / 64)));
    CHECK(phi0[64 + i] == 0.0);
  }
  std::normal_distribution<double> n;
  for (int t = 0; t < 20; ++t) {
    auto phi = feature_map(Tensor(Shape::vector(2), {3 * n(rng), 3 * n(rng)}), om, Tensor::scalar(sf2));
    double s = 0;
    for (double v : phi.values()) s += v * v;
    CHECK(s == doctest::Approx(sf2).epsilon(1e-12));
  }
  CHECK_THROWS_AS(feature_map(Tensor(Shape::vector(3), {0, 0, 0}), om, Tensor::scalar(sf2)), DimensionError);
}

namespace {

double kernel_error(std::size_t features, std::uint64_t seed, int pairs) {
  Rng rng(seed);
  std::vector<double> ls{0.8, 1.4};
  auto lst = Tensor(Shape::vector(2), ls);
  auto om = sample_frequencies(lst, features, rng);
  std::normal_distribution<double> n;
  double err = 0;
  for (int i = 0; i < pairs; ++i) {
    std::vector<double> a{n(rng), n(rng)}, b{n(rng), n(rng)};
    auto pa = feature_map(Tensor(Shape::vector(2), a), om, Tensor::scalar(1.0));
    auto pb = feature_map(Tensor(Shape::vector(2), b), om, Tensor::scalar(1.0));
    double dot = 0;
    for (std::size_t j = 0; j < pa.size(); ++j) dot += pa[j] * pb[j];
    err += std::abs(dot - k(a, b, ls, 1.0));
  }
  return err / pairs;
}

}  // namespace

TEST_CASE("random features approximate the kernel") {
  CHECK(kernel_error(10000, 1, 100) < 0.05);
  // Error halves when F quadruples; averaged over matched seeds.
  double small = 0, large = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    small += kernel_error(64, 100 + s, 100);
    large += kernel_error(256, 100 + s, 100);
  }
  const double ratio = small / large;
  CHECK(ratio > 2.0 / 1.5);
  CHECK(ratio < 2.0 * 1.5);
}

TEST_CASE("softplus inverse round trip") {
  for (double v : {1e-8, 0.01, 0.1, 1.0, 5.0, 40.0}) CHECK(softplus(softplus_inverse(v)) == doctest::Approx(v).epsilon(1e-12));
}
