#include "gpode/odeint/solve.hpp"

#include <tbb/global_control.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "gpode/error.hpp"

namespace gpode::odeint {
namespace {

Tensor as_row(const Tensor& x) {
  return x.shape().rank == 2 ? x : ad::reshape(x, ad::Shape::matrix(1, x.size()));
}

void validate(const IvpRequest& r) {
  if (r.times.empty()) throw ContractError("ivp request without output times");
  if (r.times.front() < r.t_start) throw ContractError("output time before the start time");
  for (std::size_t i = 1; i < r.times.size(); ++i)
    if (!(r.times[i] > r.times[i - 1])) throw ContractError("output times must be strictly increasing");
  if (!(r.options.rtol > 0) || !(r.options.atol > 0)) throw ContractError("solver tolerances must be positive");
  if (r.options.method == Method::rk4 && !(r.options.dt > 0)) throw ContractError("rk4 step must be positive");
  if (r.x0.rows() != 1) throw DimensionError("initial state must be a single row");
}

// Indices of rows holding a non-finite value.
std::vector<std::size_t> bad_rows(const Tensor& k) {
  std::vector<std::size_t> out;
  const std::size_t d = k.cols();
  for (std::size_t b = 0; b < k.rows(); ++b)
    for (std::size_t j = 0; j < d; ++j)
      if (!std::isfinite(k[b * d + j])) {
        out.push_back(b);
        break;
      }
  return out;
}

struct RowFailure {
  std::vector<std::size_t> rows;
  double time;
};

Tensor eval_checked(const Rhs& rhs, const Tensor& x, double t) {
  auto k = rhs(x);
  auto bad = bad_rows(k);
  if (!bad.empty()) throw RowFailure{std::move(bad), t};
  return k;
}

std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// ---- rk4 ----------------------------------------------------------------

std::vector<std::size_t> step_pattern(const IvpRequest& r) {
  std::vector<std::size_t> n;
  double prev = r.t_start;
  for (double t : r.times) {
    n.push_back(rk4_steps(t - prev, r.options.dt));
    prev = t;
  }
  return n;
}

// Advances the rows of x (one per member request) through their output times.
// Returns one B x D tensor per output time.
std::vector<Tensor> rk4_lockstep(const Rhs& rhs, std::span<const IvpRequest* const> members, Tensor x,
                                 const std::vector<std::size_t>& pattern, std::size_t& steps) {
  const std::size_t rows = members.size();
  std::vector<double> prev(rows), h(rows), c1(rows), c4(rows * 4);
  for (std::size_t b = 0; b < rows; ++b) prev[b] = members[b]->t_start;
  std::vector<Tensor> outputs;
  outputs.reserve(pattern.size());
  for (std::size_t k = 0; k < pattern.size(); ++k) {
    const std::size_t n = pattern[k];
    for (std::size_t b = 0; b < rows; ++b) {
      h[b] = (members[b]->times[k] - prev[b]) / static_cast<double>(n == 0 ? 1 : n);
      c1[b] = 0.5 * h[b];
      c4[b * 4 + 0] = h[b] / 6.0;
      c4[b * 4 + 1] = h[b] / 3.0;
      c4[b * 4 + 2] = h[b] / 3.0;
      c4[b * 4 + 3] = h[b] / 6.0;
    }
    for (std::size_t s = 0; s < n; ++s) {
      const double t = prev[0] + static_cast<double>(s) * h[0];
      auto k1 = eval_checked(rhs, x, t);
      std::array<Tensor, 1> a1{k1};
      auto k2 = eval_checked(rhs, ad::row_axpy(x, a1, c1), t);
      std::array<Tensor, 1> a2{k2};
      auto k3 = eval_checked(rhs, ad::row_axpy(x, a2, c1), t);
      std::array<Tensor, 1> a3{k3};
      auto k4 = eval_checked(rhs, ad::row_axpy(x, a3, h), t);
      std::array<Tensor, 4> all{k1, k2, k3, k4};
      x = ad::row_axpy(x, all, c4);
      ++steps;
    }
    outputs.push_back(x);
    for (std::size_t b = 0; b < rows; ++b) prev[b] = members[b]->times[k];
  }
  return outputs;
}

IvpSolution rk4_single(const Rhs& rhs, const IvpRequest& r) {
  const IvpRequest* m[1] = {&r};
  std::size_t steps = 0;
  auto outs = rk4_lockstep(rhs, m, as_row(r.x0), step_pattern(r), steps);
  return {ad::concat_rows(outs), steps, steps, 0};
}

// ---- dopri5 -------------------------------------------------------------

constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

double rms_scaled(const std::vector<double>& v, const std::vector<double>& y0, const std::vector<double>* y1,
                  const SolverOptions& o) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double m = std::abs(y0[i]);
    if (y1) m = std::max(m, std::abs((*y1)[i]));
    const double sk = o.atol + o.rtol * m;
    s += (v[i] / sk) * (v[i] / sk);
  }
  return std::sqrt(s / static_cast<double>(v.size()));
}

// Hairer's starting step heuristic, on values only.
double initial_step(const Rhs& value_rhs, const std::vector<double>& y0, const std::vector<double>& f0,
                    double span, const SolverOptions& o) {
  const double dn0 = rms_scaled(y0, y0, nullptr, o);
  const double dn1 = rms_scaled(f0, y0, nullptr, o);
  double h0 = (dn0 < 1e-5 || dn1 < 1e-5) ? 1e-6 : 0.01 * dn0 / dn1;
  h0 = std::min(h0, span);
  std::vector<double> y1(y0.size());
  for (std::size_t i = 0; i < y0.size(); ++i) y1[i] = y0[i] + h0 * f0[i];
  auto f1 = values_of(value_rhs(Tensor::matrix(1, y0.size(), y1)));
  std::vector<double> df(y0.size());
  for (std::size_t i = 0; i < y0.size(); ++i) df[i] = f1[i] - f0[i];
  const double dn2 = rms_scaled(df, y0, nullptr, o) / h0;
  const double m = std::max(dn1, dn2);
  const double h1 = m <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / m, 0.2);
  return std::min({100 * h0, h1, span});
}

IvpSolution dopri5(const Rhs& rhs, const IvpRequest& r) {
  const auto& o = r.options;
  Rhs value_rhs{{}, rhs.eval};
  for (const auto& p : rhs.params) value_rhs.params.push_back(p.detach());

  Tensor y = as_row(r.x0);
  const std::size_t dim = y.cols();
  const double t_end = r.times.back();
  IvpSolution sol;
  std::vector<Tensor> outputs;
  std::size_t next = 0;
  double t = r.t_start;
  while (next < r.times.size() && r.times[next] == t) {
    outputs.push_back(y);
    ++next;
  }
  if (next == r.times.size()) {
    sol.states = ad::concat_rows(outputs);
    return sol;
  }

  Tensor k1 = eval_checked(rhs, y, t);
  double h = initial_step(value_rhs, values_of(y), values_of(k1), t_end - t, o);
  const double safe = 0.9, beta = 0.04, expo1 = 0.2 - beta * 0.75;
  double facold = 1e-4;
  bool last_rejected = false;

  while (next < r.times.size()) {
    if (sol.steps >= o.max_steps)
      throw DivergenceError("dopri5 exceeded " + std::to_string(o.max_steps) + " steps", t, values_of(y));
    const bool final_step = t + h >= t_end || t_end - (t + h) < 1e-12 * std::max(1.0, std::abs(t_end));
    if (final_step) h = t_end - t;
    if (h <= 1e-14 * std::max(1.0, std::abs(t)))
      throw DivergenceError("dopri5 step size underflow", t, values_of(y));

    auto stage = [&](std::initializer_list<Tensor> ks, std::initializer_list<double> cs) {
      std::vector<Tensor> terms(ks);
      std::vector<double> coeff;
      for (double c : cs) coeff.push_back(h * c);
      return ad::row_axpy(y, terms, coeff);
    };
    auto k2 = eval_checked(rhs, stage({k1}, {a21}), t + c2 * h);
    auto k3 = eval_checked(rhs, stage({k1, k2}, {a31, a32}), t + c3 * h);
    auto k4 = eval_checked(rhs, stage({k1, k2, k3}, {a41, a42, a43}), t + c4 * h);
    auto k5 = eval_checked(rhs, stage({k1, k2, k3, k4}, {a51, a52, a53, a54}), t + c5 * h);
    auto k6 = eval_checked(rhs, stage({k1, k2, k3, k4, k5}, {a61, a62, a63, a64, a65}), t + h);
    auto y1 = stage({k1, k3, k4, k5, k6}, {a71, a73, a74, a75, a76});
    auto k7 = eval_checked(rhs, y1, t + h);
    ++sol.steps;

    std::vector<double> err(dim);
    for (std::size_t i = 0; i < dim; ++i)
      err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    const auto yv = values_of(y), y1v = values_of(y1);
    const double e = rms_scaled(err, yv, &y1v, o);
    if (!std::isfinite(e)) throw NumericalError("dopri5 error estimate is not finite");

    const double fac11 = std::pow(e, expo1);
    if (e <= 1.0) {
      const double fac = std::clamp(fac11 / std::pow(facold, beta) / safe, 0.1, 5.0);
      facold = std::max(e, 1e-4);
      ++sol.accepted;
      const double t_new = final_step ? t_end : t + h;
      while (next < r.times.size() && r.times[next] <= t_new) {
        const double tout = r.times[next];
        if (tout == t_new || next + 1 == r.times.size()) {
          outputs.push_back(y1);
        } else {
          // Continuous extension of order 4, written as y + sum_j c_j k_j.
          const double th = (tout - t) / h, th1 = 1.0 - th;
          const double alpha = th - th * th1 + 2.0 * th * th * th1;
          const double dd = th * th * th1 * th1;
          std::vector<double> c{alpha * a71 + dd * d1 + th * th1 - th * th * th1,
                                alpha * a73 + dd * d3,
                                alpha * a74 + dd * d4,
                                alpha * a75 + dd * d5,
                                alpha * a76 + dd * d6,
                                dd * d7 - th * th * th1};
          for (auto& v : c) v *= h;
          std::vector<Tensor> ks{k1, k3, k4, k5, k6, k7};
          outputs.push_back(ad::row_axpy(y, ks, c));
        }
        ++next;
      }
      y = y1;
      k1 = k7;
      t = t_new;
      double hnew = h / fac;
      if (last_rejected) hnew = std::min(hnew, h);
      last_rejected = false;
      h = hnew;
    } else {
      ++sol.rejected;
      last_rejected = true;
      h = h / std::min(5.0, fac11 / safe);
    }
  }
  sol.states = ad::concat_rows(outputs);
  return sol;
}

IvpSolution solve_unchecked(const Rhs& rhs, const IvpRequest& r) {
  if (r.options.method == Method::rk4) {
    std::size_t total = 0;
    for (auto n : step_pattern(r)) total += n;
    if (total > r.options.max_steps)
      throw DivergenceError("rk4 would need " + std::to_string(total) + " steps", r.t_start, values_of(r.x0));
    return rk4_single(rhs, r);
  }
  return dopri5(rhs, r);
}

// ---- batches ------------------------------------------------------------

struct Failure {
  std::size_t index;
  bool diverged;
  std::string what;
};

// Solves reqs[idx] for every idx in `indices` on whatever tape their tensors live on.
void solve_group_set(const Rhs& rhs, std::span<const IvpRequest> reqs, const std::vector<std::size_t>& indices,
                     std::vector<IvpSolution>& out, std::vector<Failure>& failures) {
  // Group rk4 requests by step pattern and dimension; dopri5 requests run alone.
  std::map<std::pair<std::vector<std::size_t>, std::size_t>, std::vector<std::size_t>> groups;
  std::vector<std::size_t> singles;
  for (std::size_t i : indices) {
    const auto& r = reqs[i];
    if (r.options.method == Method::rk4)
      groups[{step_pattern(r), r.x0.size()}].push_back(i);
    else
      singles.push_back(i);
  }
  for (std::size_t i : singles) {
    try {
      out[i] = solve(rhs, reqs[i]);
    } catch (const DivergenceError& e) {
      failures.push_back({i, true, e.what()});
    } catch (const NumericalError& e) {
      failures.push_back({i, false, e.what()});
    }
  }
  for (auto& [key, members] : groups) {
    const auto& pattern = key.first;
    std::size_t total = 0;
    for (auto n : pattern) total += n;
    if (total > reqs[members[0]].options.max_steps) {
      for (auto i : members) failures.push_back({i, true, "rk4 step budget exceeded"});
      continue;
    }
    std::vector<const IvpRequest*> ptrs;
    std::vector<Tensor> x0s;
    for (auto i : members) {
      ptrs.push_back(&reqs[i]);
      x0s.push_back(as_row(reqs[i].x0));
    }
    std::size_t steps = 0;
    std::vector<Tensor> outs;
    try {
      outs = rk4_lockstep(rhs, ptrs, members.size() == 1 ? x0s[0] : ad::concat_rows(x0s), pattern, steps);
    } catch (const RowFailure& f) {
      for (auto b : f.rows) failures.push_back({members[b], false, "non-finite vector field value"});
      continue;
    }
    for (std::size_t b = 0; b < members.size(); ++b) {
      IvpSolution s;
      s.steps = s.accepted = steps;
      if (members.size() == 1) {
        s.states = ad::concat_rows(outs);
      } else {
        std::vector<Tensor> rows;
        rows.reserve(outs.size());
        for (const auto& o : outs) rows.push_back(ad::row(o, b));
        s.states = rows.size() == 1 ? rows[0] : ad::concat_rows(rows);
      }
      out[members[b]] = std::move(s);
    }
  }
}

[[noreturn]] void raise(std::vector<Failure> failures) {
  std::sort(failures.begin(), failures.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  std::vector<std::size_t> idx;
  bool diverged = false;
  std::string msg = "segments failed:";
  for (const auto& f : failures) {
    idx.push_back(f.index);
    diverged = diverged || f.diverged;
    msg += " " + std::to_string(f.index);
  }
  msg += " (" + failures.front().what + ")";
  throw BatchError(msg, std::move(idx), diverged);
}

struct Shard {
  std::unique_ptr<ad::Tape> tape;
  std::vector<std::size_t> indices;
  std::vector<IvpSolution> local;  // indexed like reqs; only `indices` filled
  std::vector<Failure> failures;
  // Parent tensors imported into the shard tape, aligned with the imported list.
  std::vector<Tensor> leaves;
};

// Upper bound on the number of independently recorded shards per batch.
constexpr std::size_t kShards = 8;

// TBB caps its worker pool at the hardware concurrency unless told otherwise.
// Requested worker counts are honoured even on machines with fewer cores.
void allow_threads(std::size_t workers) {
  static std::mutex mu;
  static std::unique_ptr<tbb::global_control> control;
  static std::size_t current = 0;
  std::lock_guard lock(mu);
  if (workers <= current) return;
  control = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism, workers);
  current = workers;
}

}  // namespace

std::size_t rk4_steps(double length, double dt) {
  if (length <= 0.0) return 0;
  const double n = std::ceil(length / dt - 1e-9);
  return static_cast<std::size_t>(std::max(1.0, n));
}

IvpSolution solve(const Rhs& rhs, const IvpRequest& req) {
  validate(req);
  try {
    return solve_unchecked(rhs, req);
  } catch (const RowFailure& f) {
    throw NumericalError("non-finite vector field value at t=" + std::to_string(f.time));
  }
}

std::vector<IvpSolution> solve_batch(const Rhs& rhs, std::span<const IvpRequest> reqs, std::size_t workers) {
  for (const auto& r : reqs) validate(r);
  std::vector<IvpSolution> out(reqs.size());
  // The shard layout depends on the request count only, so results do not
  // change with the number of workers.
  const std::size_t count = std::min(reqs.size(), kShards);
  workers = std::max<std::size_t>(1, std::min(workers, count));

  if (count <= 1) {
    std::vector<std::size_t> all(reqs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::vector<Failure> failures;
    solve_group_set(rhs, reqs, all, out, failures);
    if (!failures.empty()) raise(std::move(failures));
    return out;
  }

  // Tracked parent tensors: rhs parameters first, then initial states.
  std::vector<Tensor> imported;
  ad::Tape* parent = nullptr;
  auto note = [&](const Tensor& t) {
    if (t.tracked()) {
      if (parent && parent != t.tape()) throw ContractError("solve_batch inputs live on different tapes");
      parent = t.tape();
    }
    imported.push_back(t);
  };
  for (const auto& p : rhs.params) note(p);
  for (const auto& r : reqs) note(r.x0);
  const std::size_t np = rhs.params.size();

  std::vector<Shard> shards(count);
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t lo = reqs.size() * s / count, hi = reqs.size() * (s + 1) / count;
    for (std::size_t i = lo; i < hi; ++i) shards[s].indices.push_back(i);
  }

  allow_threads(workers);
  tbb::task_arena arena(static_cast<int>(workers));
  arena.execute([&] {
    tbb::parallel_for(std::size_t{0}, count, [&](std::size_t s) {
      Shard& sh = shards[s];
      sh.tape = std::make_unique<ad::Tape>();
      sh.local.resize(reqs.size());
      sh.leaves.resize(imported.size());
      for (std::size_t k = 0; k < imported.size(); ++k) {
        const bool used = k < np || std::find(sh.indices.begin(), sh.indices.end(), k - np) != sh.indices.end();
        if (used) sh.leaves[k] = imported[k].tracked() ? sh.tape->leaf(imported[k]) : imported[k];
      }
      Rhs local_rhs{std::vector<Tensor>(sh.leaves.begin(), sh.leaves.begin() + static_cast<std::ptrdiff_t>(np)),
                    rhs.eval};
      std::vector<IvpRequest> local_reqs(reqs.begin(), reqs.end());
      for (std::size_t i : sh.indices) local_reqs[i].x0 = sh.leaves[np + i];
      solve_group_set(local_rhs, local_reqs, sh.indices, sh.local, sh.failures);
    });
  });

  std::vector<Failure> failures;
  for (auto& sh : shards) failures.insert(failures.end(), sh.failures.begin(), sh.failures.end());
  if (!failures.empty()) raise(std::move(failures));

  // Splice: one parent node whose value is every shard output, flattened in request order.
  std::vector<std::size_t> owner(reqs.size());
  for (std::size_t s = 0; s < count; ++s)
    for (std::size_t i : shards[s].indices) owner[i] = s;
  std::vector<double> flat;
  std::vector<std::size_t> offset(reqs.size());
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    const auto& sol = shards[owner[i]].local[i];
    offset[i] = flat.size();
    flat.insert(flat.end(), sol.states.values().begin(), sol.states.values().end());
    out[i].steps = sol.steps;
    out[i].accepted = sol.accepted;
    out[i].rejected = sol.rejected;
    out[i].states = sol.states.detach();
  }
  if (!parent) return out;

  auto shared = std::make_shared<std::vector<Shard>>(std::move(shards));
  const auto flat_shape = ad::Shape::vector(flat.size());
  auto spliced = ad::record(
      flat_shape, std::move(flat), imported,
      [shared, offset, workers](std::span<const double> g, std::span<const std::span<double>> gin) {
        auto& sh = *shared;
        std::vector<std::vector<std::vector<double>>> partial(sh.size());
        tbb::task_arena arena(static_cast<int>(workers));
        arena.execute([&] {
          tbb::parallel_for(std::size_t{0}, sh.size(), [&](std::size_t s) {
            std::vector<ad::Seed> seeds;
            for (std::size_t i : sh[s].indices) {
              const auto& st = sh[s].local[i].states;
              seeds.push_back({st, g.subspan(offset[i], st.size())});
            }
            auto grads = sh[s].tape->backward_from(seeds);
            partial[s].resize(sh[s].leaves.size());
            for (std::size_t k = 0; k < sh[s].leaves.size(); ++k) {
              const auto& leaf = sh[s].leaves[k];
              if (leaf.defined() && leaf.tracked()) {
                auto v = grads.of(leaf);
                partial[s][k].assign(v.begin(), v.end());
              }
            }
          });
        });
        for (std::size_t s = 0; s < sh.size(); ++s)
          for (std::size_t k = 0; k < partial[s].size(); ++k) {
            if (gin[k].empty() || partial[s][k].empty()) continue;
            for (std::size_t j = 0; j < gin[k].size(); ++j) gin[k][j] += partial[s][k][j];
          }
      });
  for (std::size_t i = 0; i < reqs.size(); ++i)
    out[i].states = ad::flat_slice(spliced, offset[i], out[i].states.shape());
  return out;
}

}  // namespace gpode::odeint
