#include "gpode/trainer/adam.hpp"

#include <cmath>

#include "gpode/error.hpp"

namespace gpode::trainer {

void adam_step(std::vector<std::vector<double>>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, double lr, const AdamHyper& h) {
  if (grads.size() != params.size()) throw DimensionError("adam: parameter and gradient group counts differ");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam: state group count differs");
  for (std::size_t k = 0; k < params.size(); ++k)
    if (grads[k].size() != params[k].size() || state.m[k].size() != params[k].size() ||
        state.v[k].size() != params[k].size())
      throw DimensionError("adam: group " + std::to_string(k) + " sizes differ");

  ++state.t;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = grads[k][i];
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + h.eps);
    }
  }
}

}  // namespace gpode::trainer
