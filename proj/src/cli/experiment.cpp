#include "gpode/cli/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <thread>

#include "gpode/cli/csv.hpp"
#include "gpode/error.hpp"

namespace gpode::cli {
namespace fs = std::filesystem;
namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

trainer::TrainConfig train_config(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& dir) {
  auto tc = cfg.train;
  tc.seed = seed;
  tc.t_start = cfg.data.t_start;
  tc.checkpoint_path = (fs::path(dir) / "checkpoint.json").string();
  return tc;
}

Table trace_table(const std::vector<trainer::TraceRow>& rows) {
  Table t;
  t.header = {"step", "elbo", "likelihood", "cross_entropy", "entropy", "initial", "inducing", "lr", "skipped"};
  for (const auto& r : rows)
    t.rows.push_back({static_cast<double>(r.step), r.elbo, r.terms.likelihood, r.terms.cross_entropy,
                      r.terms.entropy, r.terms.initial, r.terms.inducing, r.lr, r.skipped ? 1.0 : 0.0});
  return t;
}

Table timing_table(const std::vector<trainer::TraceRow>& rows) {
  Table t;
  t.header = {"step", "seconds"};
  for (const auto& r : rows) t.rows.push_back({static_cast<double>(r.step), r.seconds});
  return t;
}

std::vector<std::string> dim_columns(const std::string& prefix, std::size_t d) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < d; ++k) out.push_back(prefix + "x" + std::to_string(k + 1));
  return out;
}

std::string vectorfield(const systems::Trajectory& train, const models::Model& model) {
  if (train.dim != 2) return {};
  constexpr std::size_t kGrid = 25;
  double lo[2], hi[2];
  for (std::size_t k = 0; k < 2; ++k) {
    lo[k] = hi[k] = train.values[k];
    for (std::size_t i = 0; i < train.size(); ++i) {
      lo[k] = std::min(lo[k], train.values[i * 2 + k]);
      hi[k] = std::max(hi[k], train.values[i * 2 + k]);
    }
    const double pad = 0.15 * (hi[k] - lo[k]);
    lo[k] -= pad;
    hi[k] += pad;
  }
  std::vector<double> xq;
  for (std::size_t i = 0; i < kGrid; ++i)
    for (std::size_t j = 0; j < kGrid; ++j) {
      xq.push_back(lo[0] + (hi[0] - lo[0]) * static_cast<double>(j) / (kGrid - 1));
      xq.push_back(lo[1] + (hi[1] - lo[1]) * static_cast<double>(i) / (kGrid - 1));
    }
  const auto fs = models::field_summary(ad::Tensor::matrix(kGrid * kGrid, 2, xq), model);
  Table t;
  t.header = {"x1", "x2", "mean_f1", "mean_f2", "std_f1", "std_f2"};
  for (std::size_t q = 0; q < kGrid * kGrid; ++q)
    t.rows.push_back({xq[2 * q], xq[2 * q + 1], fs.mean[2 * q], fs.mean[2 * q + 1], fs.stddev[2 * q],
                      fs.stddev[2 * q + 1]});
  return t.str();
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

void log_row(std::uint64_t seed, const trainer::TraceRow& r, std::size_t steps) {
  if (r.skipped || r.step % 500 == 0 || r.step == steps)
    std::clog << "seed " << seed << " step " << r.step << " elbo " << r.elbo << " lr " << r.lr
              << (r.skipped ? " (skipped)" : "") << '\n';
}

}  // namespace

std::string seed_dir(const std::string& out, std::uint64_t seed) {
  return (fs::path(out) / ("seed-" + std::to_string(seed))).string();
}

systems::Dataset make_dataset(const ExperimentConfig& cfg) {
  if (cfg.train_csv.empty()) {
    Rng rng = substream(cfg.data_seed, "data");
    return systems::generate(cfg.data, rng);
  }
  // Files carry no clean states, so the observations stand in for them.
  systems::Dataset d;
  d.train = systems::read_csv(cfg.train_csv);
  d.train_clean = d.train;
  if (!cfg.test_csv.empty()) {
    d.test = systems::read_csv(cfg.test_csv);
    d.test_clean = d.test;
  }
  return d;
}

Evaluation evaluate(const ExperimentConfig& cfg, const systems::Dataset& data, const models::Model& model,
                    std::uint64_t seed) {
  const std::size_t d = data.train.dim;
  struct Point {
    double t;
    bool test;
    std::size_t index;
  };
  std::vector<Point> pts;
  for (std::size_t i = 0; i < data.train.size(); ++i) pts.push_back({data.train.times[i], false, i});
  for (std::size_t i = 0; i < data.test.size(); ++i) pts.push_back({data.test.times[i], true, i});
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.t < b.t; });
  std::vector<double> times;
  for (const auto& p : pts) times.push_back(p.t);

  models::PredictOptions po;
  po.samples = cfg.eval.samples;
  po.t_start = cfg.data.t_start;
  po.solver.rtol = po.solver.atol = cfg.eval.tolerance;
  models::Streams streams{substream(seed, "eval.path"), substream(seed, "eval.states")};
  const auto pred = models::predict(times, model, streams, po);

  Table table;
  table.header = {"split", "t"};
  for (const auto* prefix : {"mean_", "var_", "obs_", "clean_"})
    for (auto& c : dim_columns(prefix, d)) table.header.push_back(c);

  Evaluation ev;
  for (bool test : {false, true}) {
    const auto& obs = test ? data.test : data.train;
    const auto& clean = test ? data.test_clean : data.train_clean;
    std::vector<double> mean, var, truth;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (pts[k].test != test) continue;
      std::vector<Cell> row{std::string(test ? "test" : "train"), pts[k].t};
      for (std::size_t j = 0; j < d; ++j) row.emplace_back(pred.mean[k * d + j]);
      for (std::size_t j = 0; j < d; ++j) row.emplace_back(pred.variance[k * d + j]);
      for (std::size_t j = 0; j < d; ++j) row.emplace_back(obs.values[pts[k].index * d + j]);
      for (std::size_t j = 0; j < d; ++j) row.emplace_back(clean.values[pts[k].index * d + j]);
      table.rows.push_back(std::move(row));
      for (std::size_t j = 0; j < d; ++j) {
        mean.push_back(pred.mean[k * d + j]);
        var.push_back(pred.variance[k * d + j]);
        truth.push_back(obs.values[pts[k].index * d + j]);
      }
    }
    if (mean.empty()) continue;
    ev.metrics.push_back({test ? "test" : "train", systems::mse(mean, truth), systems::mnll(mean, var, truth)});
  }
  ev.predictions_csv = table.str();
  ev.vectorfield_csv = vectorfield(data.train, model);
  return ev;
}

trainer::Trainer train_seed(const ExperimentConfig& cfg, const systems::Dataset& data, std::uint64_t seed,
                            const std::string& dir, bool quiet) {
  ensure_dir(dir);
  trainer::Trainer tr(train_config(cfg, seed, dir), data.train);
  const auto rows = tr.run([&](const trainer::TraceRow& r) {
    if (!quiet) log_row(seed, r, cfg.train.steps);
  });
  trace_table(rows).write((fs::path(dir) / "trace.csv").string());
  timing_table(rows).write((fs::path(dir) / "timing.csv").string());
  tr.save(tr.config().checkpoint_path);
  return tr;
}

models::Model load_model(const ExperimentConfig& cfg, const systems::Dataset& data, std::uint64_t seed,
                         const std::string& dir) {
  const auto tc = train_config(cfg, seed, dir);
  return trainer::Trainer::load_file(tc.checkpoint_path, tc, data.train).model();
}

SeedResult evaluate_seed(const ExperimentConfig& cfg, const systems::Dataset& data, std::uint64_t seed,
                         const std::string& dir, const models::Model& model) {
  ensure_dir(dir);
  SeedResult res;
  res.seed = seed;
  try {
    auto ev = evaluate(cfg, data, model, seed);
    write_text((fs::path(dir) / "predictions.csv").string(), ev.predictions_csv);
    if (!ev.vectorfield_csv.empty()) write_text((fs::path(dir) / "vectorfield.csv").string(), ev.vectorfield_csv);
    res.metrics = std::move(ev.metrics);
    res.ok = true;
  } catch (const NumericalError& err) {
    res.error = err.what();
    std::clog << "seed " << seed << " failed: " << err.what() << '\n';
  }
  write_text((fs::path(dir) / "metrics.csv").string(), metrics_csv({res}));
  return res;
}

SeedResult run_seed(const ExperimentConfig& cfg, const systems::Dataset& data, std::uint64_t seed,
                    const std::string& dir, bool quiet) {
  try {
    auto tr = train_seed(cfg, data, seed, dir, quiet);
    return evaluate_seed(cfg, data, seed, dir, tr.model());
  } catch (const NumericalError& err) {
    std::clog << "seed " << seed << " failed: " << err.what() << '\n';
    SeedResult res;
    res.seed = seed;
    res.error = err.what();
    write_text((fs::path(dir) / "metrics.csv").string(), metrics_csv({res}));
    return res;
  }
}

std::vector<SeedResult> run(const ExperimentConfig& cfg, bool quiet) {
  cfg.validate();
  const auto data = make_dataset(cfg);
  ensure_dir(cfg.output);
  const auto data_dir = (fs::path(cfg.output) / "data").string();
  ensure_dir(data_dir);
  systems::write_csv((fs::path(data_dir) / "train.csv").string(), data.train);
  systems::write_csv((fs::path(data_dir) / "train_clean.csv").string(), data.train_clean);
  if (!data.test.empty()) {
    systems::write_csv((fs::path(data_dir) / "test.csv").string(), data.test);
    systems::write_csv((fs::path(data_dir) / "test_clean.csv").string(), data.test_clean);
  }

  std::vector<SeedResult> results(cfg.seeds.size());
  if (cfg.parallel_seeds && cfg.seeds.size() > 1) {
    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
      threads.emplace_back([&, i] {
        try {
          results[i] = run_seed(cfg, data, cfg.seeds[i], seed_dir(cfg.output, cfg.seeds[i]), quiet);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    for (auto& t : threads) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
      results[i] = run_seed(cfg, data, cfg.seeds[i], seed_dir(cfg.output, cfg.seeds[i]), quiet);
  }

  write_text((fs::path(cfg.output) / "metrics.csv").string(), metrics_csv(results));
  write_text((fs::path(cfg.output) / "summary.json").string(), summary_json(cfg, results));
  return results;
}

std::string metrics_csv(const std::vector<SeedResult>& results) {
  Table t;
  t.header = {"seed", "split", "mse", "mnll"};
  for (const auto& r : results)
    for (const auto& m : r.metrics) t.rows.push_back({static_cast<double>(r.seed), m.split, m.mse, m.mnll});
  return t.str();
}

std::string summary_json(const ExperimentConfig& cfg, const std::vector<SeedResult>& results) {
  nlohmann::ordered_json j;
  j["experiment"] = experiment_name(cfg.experiment);
  j["model"] = model_name(cfg.train.objective);
  j["steps"] = cfg.train.steps;
  j["data_seed"] = cfg.data_seed;
  std::vector<std::uint64_t> ok, failed;
  for (const auto& r : results) (r.ok ? ok : failed).push_back(r.seed);
  j["seeds"] = ok;
  j["failed_seeds"] = failed;
  auto& metrics = j["metrics"] = nlohmann::ordered_json::object();
  for (const char* split : {"train", "test"}) {
    std::vector<double> mse, mnll;
    for (const auto& r : results)
      for (const auto& m : r.metrics)
        if (m.split == split) {
          mse.push_back(m.mse);
          mnll.push_back(m.mnll);
        }
    if (mse.empty()) continue;
    metrics[split]["mse"] = {{"mean", mean_of(mse)}, {"stderr", stderr_of(mse)}, {"n", mse.size()}};
    metrics[split]["mnll"] = {{"mean", mean_of(mnll)}, {"stderr", stderr_of(mnll)}, {"n", mnll.size()}};
  }
  return j.dump(2) + "\n";
}

BenchReport bench_shooting(const ExperimentConfig& cfg, std::uint64_t seed, bool quiet) {
  cfg.validate();
  const auto data = make_dataset(cfg);
  Table t;
  t.header = {"model", "step", "seconds", "elbo"};
  BenchReport rep;
  for (auto obj : {trainer::Objective::vanilla, trainer::Objective::shooting}) {
    auto tc = cfg.train;
    tc.seed = seed;
    tc.objective = obj;
    tc.t_start = cfg.data.t_start;
    tc.checkpoint_interval = 0;
    trainer::Trainer tr(tc, data.train);
    const auto rows = tr.run([&](const trainer::TraceRow& r) {
      if (!quiet) log_row(seed, r, tc.steps);
    });
    double total = 0.0;
    for (const auto& r : rows) {
      t.rows.push_back({model_name(obj), static_cast<double>(r.step), r.seconds, r.elbo});
      total += r.seconds;
    }
    (obj == trainer::Objective::vanilla ? rep.vanilla_seconds : rep.shooting_seconds) =
        total / static_cast<double>(rows.size());
  }
  rep.speedup = rep.vanilla_seconds / rep.shooting_seconds;
  rep.runtime_csv = t.str();
  return rep;
}

}  // namespace gpode::cli
