#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "gpode/error.hpp"
#include "gpode/systems/systems.hpp"

using namespace gpode;
using namespace gpode::systems;

TEST_CASE("true_field worked examples") {
  auto f = true_field(Kind::vdp, std::vector<double>{0.0, 0.0});
  CHECK(f[0] == 0.0);
  CHECK(f[1] == 0.0);
  f = true_field(Kind::vdp, std::vector<double>{-1.5, 2.5});
  CHECK(f[0] == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(f[1] == doctest::Approx(-0.0625).epsilon(1e-12));
  f = true_field(Kind::fhn, std::vector<double>{0.0, 0.0});
  CHECK(f[0] == 0.0);
  CHECK(f[1] == doctest::Approx(0.066667).epsilon(1e-5));
  CHECK_THROWS_AS(parse_kind("lorenz"), ConfigError);
  CHECK_THROWS_AS(true_field(Kind::vdp, std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("vdp dataset of the regular protocol") {
  SystemSpec spec;
  spec.forecast = 49;
  Rng rng(3);
  auto ds = generate(spec, rng);
  REQUIRE(ds.train.size() == 50);
  CHECK(ds.train.times.front() == 0.0);
  CHECK(ds.train.times.back() == 7.0);
  REQUIRE(ds.test.size() == 49);
  CHECK(ds.test.times.front() == doctest::Approx(7.0 + 7.0 / 49));
  CHECK(ds.test.times.back() == doctest::Approx(14.0));
  CHECK(ds.train_clean.row(0)[0] == -1.5);
  CHECK(ds.train_clean.row(0)[1] == 2.5);
  ds.train.validate();
  ds.test.validate();

  // Residual variance close to the requested noise.
  double acc = 0.0;
  for (std::size_t i = 0; i < ds.train.values.size(); ++i) {
    const double r = ds.train.values[i] - ds.train_clean.values[i];
    acc += r * r;
  }
  CHECK(acc / 100.0 == doctest::Approx(0.05).epsilon(0.35));
}

TEST_CASE("noise-free generation returns the clean states") {
  SystemSpec spec;
  spec.noise_variance = 0.0;
  spec.grid = Grid::uniform;
  Rng rng(1);
  auto ds = generate(spec, rng);
  CHECK(ds.train.values == ds.train_clean.values);
  CHECK(ds.train.times.front() >= 0.07);
  ds.train.validate();
}

TEST_CASE("generation is deterministic") {
  SystemSpec spec;
  spec.grid = Grid::uniform;
  spec.forecast = 10;
  Rng a(9), b(9);
  auto x = generate(spec, a), y = generate(spec, b);
  CHECK(x.train.times == y.train.times);
  CHECK(x.train.values == y.train.values);
  CHECK(x.test.values == y.test.values);
}

TEST_CASE("fhn quadrant mask removes observations") {
  SystemSpec spec;
  spec.kind = Kind::fhn;
  spec.x0 = {-1.0, 1.0};
  spec.t_end = 5.0;
  spec.n = 25;
  spec.noise_variance = 0.025;
  spec.mask = lower_right_quadrant;
  Rng rng(0);
  auto ds = generate(spec, rng);
  CHECK(ds.train.size() < 25);
  CHECK(ds.test.size() > 0);
  CHECK(ds.train.size() + ds.test.size() == 25);
  for (std::size_t i = 0; i < ds.train_clean.size(); ++i) CHECK_FALSE(lower_right_quadrant(ds.train_clean.row(i)));
  for (std::size_t i = 0; i < ds.test_clean.size(); ++i) CHECK(lower_right_quadrant(ds.test_clean.row(i)));
  ds.test.validate();
}

TEST_CASE("vdp settles on its limit cycle") {
  std::vector<double> times;
  for (int k = 0; k <= 500; ++k) times.push_back(20.0 + k * 0.01);
  auto traj = simulate(Kind::vdp, std::vector<double>{-1.5, 2.5}, 0.0, times);
  double amp = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) amp = std::max(amp, std::abs(traj.row(i)[0]));
  CHECK(amp >= 1.9);
  CHECK(amp <= 2.1);
}

TEST_CASE("metric examples") {
  std::vector<double> y{0.0, 1.0}, mu{0.0, 0.0}, one{1.0, 1.0};
  CHECK(mse(y, y) == 0.0);
  CHECK(mse(mu, y) == doctest::Approx(0.5));
  CHECK(mnll(y, one, y) == doctest::Approx(0.5 * std::log(2 * std::numbers::pi)));
  CHECK(mnll(mu, one, y) == doctest::Approx(1.168939).epsilon(1e-6));
  CHECK_THROWS_AS(mse(mu, std::vector<double>{1.0}), DimensionError);
  CHECK_THROWS_AS(mnll(mu, std::vector<double>{1.0, 0.0}, y), ContractError);
}

TEST_CASE("mnll is minimized at the mean squared residual") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> mu(20), y(20);
    double msr = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      mu[i] = n01(rng);
      y[i] = mu[i] + 0.7 * n01(rng);
      msr += (y[i] - mu[i]) * (y[i] - mu[i]) / 20.0;
    }
    double best = 0.0, best_val = 1e300;
    for (int k = 1; k <= 4000; ++k) {
      const double s2 = k * 1e-3;
      const double v = mnll(mu, std::vector<double>(20, s2), y);
      if (v < best_val) best_val = v, best = s2;
    }
    CHECK(best == doctest::Approx(msr).epsilon(2e-3 / msr));
  }
}

TEST_CASE("csv round trip is lossless") {
  SystemSpec spec;
  spec.grid = Grid::uniform;
  Rng rng(4);
  auto ds = generate(spec, rng);
  auto text = to_csv(ds.train);
  auto back = from_csv(text);
  CHECK(back.times == ds.train.times);
  CHECK(back.values == ds.train.values);
  CHECK(to_csv(back) == text);
  CHECK(text.rfind("t,x1,x2\n", 0) == 0);
  CHECK_THROWS_AS(from_csv("t,x1\n1,abc\n"), IoError);
  CHECK_THROWS_AS(read_csv("/nonexistent/file.csv"), IoError);
}
