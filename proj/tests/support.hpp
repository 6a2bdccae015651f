#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gpode/autodiff/ops.hpp"

namespace testing {

using gpode::ad::Shape;
using gpode::ad::Tape;
using gpode::ad::Tensor;

// Builds a scalar loss from leaves living on the given tape.
using LossFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct FdReport {
  double worst_rel = 0.0;
  std::string where;
};

// Compares tape gradients against central differences. Relative error uses an
// absolute floor so that near-zero entries do not blow up.
inline FdReport fd_check(const LossFn& loss, const std::vector<Tensor>& inputs, double h = 1e-5,
                         double floor = 1e-7) {
  Tape tape;
  std::vector<Tensor> leaves;
  for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
  auto l = loss(tape, leaves);
  auto grads = tape.backward(l);

  auto eval = [&](std::size_t k, std::size_t i, double delta) {
    std::vector<Tensor> moved = inputs;
    std::vector<double> v(inputs[k].values().begin(), inputs[k].values().end());
    v[i] += delta;
    moved[k] = Tensor(inputs[k].shape(), std::move(v));
    Tape t;
    std::vector<Tensor> lv;
    for (const auto& x : moved) lv.push_back(t.leaf(x));
    return loss(t, lv).item();
  };

  FdReport rep;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto g = grads.of(leaves[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double fd = (eval(k, i, h) - eval(k, i, -h)) / (2 * h);
      const double err = std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), floor});
      const double abs_err = std::abs(fd - g[i]);
      const double rel = abs_err < floor ? 0.0 : err;
      if (rel > rep.worst_rel) {
        rep.worst_rel = rel;
        rep.where = "input " + std::to_string(k) + " entry " + std::to_string(i) +
                    " analytic " + std::to_string(g[i]) + " fd " + std::to_string(fd);
      }
    }
  }
  return rep;
}

inline Tensor random_tensor(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(s.size());
  for (auto& x : v) x = n(rng);
  return Tensor(s, std::move(v));
}

// Random symmetric positive-definite n x n matrix.
inline Tensor random_spd(std::size_t n, std::mt19937_64& rng) {
  auto a = random_tensor(Shape::matrix(n, n), rng);
  std::vector<double> v(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = i == j ? static_cast<double>(n) : 0.0;
      for (std::size_t p = 0; p < n; ++p) s += a(i, p) * a(j, p);
      v[i * n + j] = s;
    }
  return Tensor(Shape::matrix(n, n), std::move(v));
}

}  // namespace testing
