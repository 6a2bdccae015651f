#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace gpode::systems {

// Observations y_1..y_N at increasing times, stored row-major (N x D).
struct Trajectory {
  std::vector<double> times;
  std::vector<double> values;
  std::size_t dim = 0;

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  void push(double t, std::span<const double> y);

  // Throws ContractError unless times strictly increase and every value is finite.
  void validate() const;
};

// `t,x1,...,xD` header, one row per observation, shortest round-trip decimals.
std::string to_csv(const Trajectory& traj);
Trajectory from_csv(const std::string& text);

void write_csv(const std::string& path, const Trajectory& traj);
Trajectory read_csv(const std::string& path);

}  // namespace gpode::systems
