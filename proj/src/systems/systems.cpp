#include "gpode/systems/systems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gpode/error.hpp"

namespace gpode::systems {
namespace {

void field_into(Kind kind, const double* x, double* out) {
  const double a = x[0], b = x[1];
  switch (kind) {
    case Kind::vdp:
      out[0] = b;
      out[1] = -a + 0.5 * b * (1.0 - a * a);
      return;
    case Kind::fhn:
      out[0] = 3.0 * (a - a * a * a / 3.0 + b);
      out[1] = (0.2 - 3.0 * a - 0.2 * b) / 3.0;
      return;
  }
}

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size())
    throw DimensionError(std::string(what) + ": sizes " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  if (a.empty()) throw DimensionError(std::string(what) + ": no entries");
}

}  // namespace

Kind parse_kind(std::string_view name) {
  if (name == "vdp") return Kind::vdp;
  if (name == "fhn") return Kind::fhn;
  throw ConfigError("unknown system '" + std::string(name) + "'", {"system"});
}

std::string_view kind_name(Kind kind) { return kind == Kind::vdp ? "vdp" : "fhn"; }

std::vector<double> true_field(Kind kind, std::span<const double> x) {
  if (x.size() != 2) throw DimensionError("true_field: state must have dimension 2");
  std::vector<double> out(2);
  field_into(kind, x.data(), out.data());
  return out;
}

odeint::Rhs true_rhs(Kind kind) {
  return {{}, [kind](std::span<const ad::Tensor>, const ad::Tensor& x) {
            if (x.cols() != 2) throw DimensionError("true_rhs: state must have dimension 2");
            std::vector<double> v(x.size());
            for (std::size_t b = 0; b < x.rows(); ++b) field_into(kind, x.values().data() + 2 * b, v.data() + 2 * b);
            return ad::Tensor::matrix(x.rows(), 2, std::move(v));
          }};
}

bool lower_right_quadrant(std::span<const double> x) { return x[0] > 0.0 && x[1] < 0.0; }

void SystemSpec::validate() const {
  if (n < 2) throw ConfigError("dataset needs at least 2 points", {"n"});
  if (!(t_end > t_start)) throw ConfigError("t_end must exceed t_start", {"t_end"});
  if (!(noise_variance >= 0.0)) throw ConfigError("noise variance must be non-negative", {"noise_variance"});
  if (x0.size() != 2) throw ConfigError("initial state must have dimension 2", {"x0"});
}

Trajectory simulate(Kind kind, std::span<const double> x0, double t_start, std::span<const double> times) {
  odeint::IvpRequest req;
  req.x0 = ad::Tensor(ad::Shape::vector(x0.size()), {x0.begin(), x0.end()});
  req.t_start = t_start;
  req.times.assign(times.begin(), times.end());
  req.options.method = odeint::Method::dopri5;
  req.options.rtol = req.options.atol = 1e-8;
  auto sol = odeint::solve(true_rhs(kind), req);
  Trajectory out;
  out.dim = x0.size();
  out.times = req.times;
  out.values.assign(sol.states.values().begin(), sol.states.values().end());
  return out;
}

Dataset generate(const SystemSpec& spec, Rng& rng) {
  spec.validate();
  const double span = spec.t_end - spec.t_start;
  std::vector<double> times(spec.n);
  if (spec.grid == Grid::regular) {
    for (std::size_t k = 0; k < spec.n; ++k)
      times[k] = spec.t_start + span * static_cast<double>(k) / static_cast<double>(spec.n - 1);
    times.back() = spec.t_end;
  } else {
    std::uniform_real_distribution<double> unif(spec.t_start + 0.01 * span, spec.t_end);
    for (auto& t : times) t = unif(rng);
    std::sort(times.begin(), times.end());
    if (std::adjacent_find(times.begin(), times.end()) != times.end())
      throw NumericalError("uniform grid drew duplicate times");
  }
  const double h = span / static_cast<double>(spec.n - 1);
  for (std::size_t k = 1; k <= spec.forecast; ++k) times.push_back(spec.t_end + h * static_cast<double>(k));

  auto clean = simulate(spec.kind, spec.x0, spec.t_start, times);
  const std::size_t d = clean.dim;
  auto eps = standard_normals(rng, times.size() * d);
  const double sd = std::sqrt(spec.noise_variance);

  Dataset out;
  out.train.dim = out.train_clean.dim = out.test.dim = out.test_clean.dim = d;
  Trajectory ahead, ahead_clean;
  std::vector<double> y(d);
  for (std::size_t i = 0; i < times.size(); ++i) {
    auto x = clean.row(i);
    for (std::size_t k = 0; k < d; ++k) y[k] = x[k] + sd * eps[i * d + k];
    const bool forecast = i >= spec.n;
    const bool held = forecast || (spec.mask && spec.mask(x));
    (forecast ? ahead : held ? out.test : out.train).push(times[i], y);
    (forecast ? ahead_clean : held ? out.test_clean : out.train_clean).push(times[i], x);
  }
  // Masked points lie inside the training span, so appending keeps times sorted.
  for (std::size_t i = 0; i < ahead.size(); ++i) {
    out.test.push(ahead.times[i], ahead.row(i));
    out.test_clean.push(ahead_clean.times[i], ahead_clean.row(i));
  }
  return out;
}

double mse(std::span<const double> mean, std::span<const double> truth) {
  check_pair(mean, truth, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) acc += (mean[i] - truth[i]) * (mean[i] - truth[i]);
  return acc / static_cast<double>(mean.size());
}

double mnll(std::span<const double> mean, std::span<const double> variance, std::span<const double> truth) {
  check_pair(mean, truth, "mnll");
  check_pair(mean, variance, "mnll");
  const double log2pi = std::log(2.0 * std::numbers::pi);
  double acc = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    if (!(variance[i] > 0.0)) throw ContractError("mnll: variances must be positive");
    const double r = truth[i] - mean[i];
    acc += 0.5 * (log2pi + std::log(variance[i]) + r * r / variance[i]);
  }
  return acc / static_cast<double>(mean.size());
}

}  // namespace gpode::systems
