#pragma once

#include <cstdint>
#include <vector>

namespace gpode::trainer {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moments per parameter group plus the shared step count.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t t = 0;
};

// One bias-corrected descent step on every group. Empty state is sized on first use.
void adam_step(std::vector<std::vector<double>>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, double lr, const AdamHyper& hyper = {});

}  // namespace gpode::trainer
