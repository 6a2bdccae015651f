#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "gpode/odeint/solve.hpp"
#include "gpode/rng.hpp"
#include "gpode/systems/trajectory.hpp"

namespace gpode::systems {

enum class Kind { vdp, fhn };

// Throws ConfigError for unknown names.
Kind parse_kind(std::string_view name);
std::string_view kind_name(Kind kind);

std::vector<double> true_field(Kind kind, std::span<const double> x);
// The same field as an untracked batch rhs.
odeint::Rhs true_rhs(Kind kind);

enum class Grid { regular, uniform };

// Observations removed from training when the predicate holds for the clean state.
using Mask = std::function<bool(std::span<const double>)>;

// x1 > 0 and x2 < 0.
bool lower_right_quadrant(std::span<const double> x);

struct SystemSpec {
  Kind kind = Kind::vdp;
  std::vector<double> x0{-1.5, 2.5};
  double t_start = 0.0;
  double t_end = 7.0;
  Grid grid = Grid::regular;
  std::size_t n = 50;
  double noise_variance = 0.05;
  Mask mask;
  // Extra points after t_end at the regular spacing (t_end - t_start) / (n - 1).
  std::size_t forecast = 0;

  void validate() const;
};

struct Dataset {
  Trajectory train;        // noisy, unmasked grid points
  Trajectory train_clean;
  Trajectory test;         // noisy masked points followed by forecast points
  Trajectory test_clean;
};

// Grid times come from rng first (uniform grids only), then noise in time order.
Dataset generate(const SystemSpec& spec, Rng& rng);

// Clean states of the true system at the given times (dopri5, rtol = atol = 1e-8).
Trajectory simulate(Kind kind, std::span<const double> x0, double t_start, std::span<const double> times);

// Means over all time and coordinate entries.
double mse(std::span<const double> mean, std::span<const double> truth);
double mnll(std::span<const double> mean, std::span<const double> variance, std::span<const double> truth);

}  // namespace gpode::systems
