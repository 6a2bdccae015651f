#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "gpode/cli/csv.hpp"
#include "gpode/cli/experiment.hpp"
#include "gpode/error.hpp"

namespace fs = std::filesystem;
using namespace gpode;

namespace {

constexpr int kOk = 0, kIo = 1, kConfig = 2, kNumerical = 3;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> steps;
  bool parallel_seeds = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "experiment config (INI)")->required();
  cmd->add_option("--seed", f.seed, "seed to run instead of the configured list");
  cmd->add_option("--out", f.out, "output directory (overrides experiment.output)");
}

cli::ExperimentConfig configure(const Flags& f) {
  auto cfg = cli::load_config(f.config);
  if (!f.out.empty()) cfg.output = f.out;
  if (f.workers) cfg.train.workers = *f.workers;
  if (f.steps) cfg.train.steps = *f.steps;
  if (f.parallel_seeds) cfg.parallel_seeds = true;
  cfg.validate();
  return cfg;
}

void print_metrics(const cli::SeedResult& r) {
  if (!r.ok) {
    std::cout << "seed " << r.seed << " failed: " << r.error << '\n';
    return;
  }
  for (const auto& m : r.metrics)
    std::cout << "seed " << r.seed << ' ' << m.split << " mse " << m.mse << " mnll " << m.mnll << '\n';
}

int cmd_generate(const Flags& f) {
  auto cfg = configure(f);
  if (f.seed) cfg.data_seed = *f.seed;
  const auto dir = f.out.empty() ? (fs::path(cfg.output) / "data").string() : f.out;
  fs::create_directories(dir);
  const auto data = cli::make_dataset(cfg);
  systems::write_csv((fs::path(dir) / "train.csv").string(), data.train);
  systems::write_csv((fs::path(dir) / "train_clean.csv").string(), data.train_clean);
  if (!data.test.empty()) {
    systems::write_csv((fs::path(dir) / "test.csv").string(), data.test);
    systems::write_csv((fs::path(dir) / "test_clean.csv").string(), data.test_clean);
  }
  std::cout << "wrote " << data.train.size() << " training and " << data.test.size() << " test points to " << dir
            << '\n';
  return kOk;
}

int cmd_train(const Flags& f) {
  const auto cfg = configure(f);
  const auto seed = f.seed.value_or(cfg.seeds.front());
  const auto dir = cli::seed_dir(cfg.output, seed);
  const auto data = cli::make_dataset(cfg);
  auto tr = cli::train_seed(cfg, data, seed, dir);
  std::cout << "trained seed " << seed << " for " << tr.steps_done() << " steps, checkpoint in " << dir << '\n';
  return kOk;
}

int cmd_evaluate(const Flags& f) {
  const auto cfg = configure(f);
  const auto seed = f.seed.value_or(cfg.seeds.front());
  const auto dir = cli::seed_dir(cfg.output, seed);
  const auto data = cli::make_dataset(cfg);
  const auto res = cli::evaluate_seed(cfg, data, seed, dir, cli::load_model(cfg, data, seed, dir));
  print_metrics(res);
  return res.ok ? kOk : kNumerical;
}

int cmd_run(const Flags& f) {
  auto cfg = configure(f);
  if (f.seed) cfg.seeds = {*f.seed};
  const auto results = cli::run(cfg);
  bool ok = true;
  for (const auto& r : results) {
    print_metrics(r);
    ok = ok && r.ok;
  }
  std::cout << "results in " << cfg.output << '\n';
  return ok ? kOk : kNumerical;
}

int cmd_bench(const Flags& f) {
  const auto cfg = configure(f);
  const auto seed = f.seed.value_or(cfg.seeds.front());
  fs::create_directories(cfg.output);
  const auto rep = cli::bench_shooting(cfg, seed);
  std::ofstream((fs::path(cfg.output) / "runtime.csv").string(), std::ios::binary) << rep.runtime_csv;
  nlohmann::ordered_json j;
  j["steps"] = cfg.train.steps;
  j["workers"] = cfg.train.workers;
  j["vanilla_seconds_per_step"] = rep.vanilla_seconds;
  j["shooting_seconds_per_step"] = rep.shooting_seconds;
  j["speedup"] = rep.speedup;
  std::ofstream((fs::path(cfg.output) / "runtime_summary.json").string()) << j.dump(2) << '\n';
  std::cout << "vanilla " << rep.vanilla_seconds << " s/step, shooting " << rep.shooting_seconds
            << " s/step, speedup " << rep.speedup << "x\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian process ODE inference"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("generate", "simulate the experiment dataset");
  add_common(gen, f);
  auto* train = app.add_subcommand("train", "train one seed and write its checkpoint");
  add_common(train, f);
  train->add_option("--workers", f.workers, "parallel segment workers");
  auto* eval = app.add_subcommand("evaluate", "evaluate the checkpoint of one seed");
  add_common(eval, f);
  auto* run = app.add_subcommand("run", "generate, train and evaluate every seed");
  add_common(run, f);
  run->add_option("--workers", f.workers, "parallel segment workers");
  run->add_flag("--parallel-seeds", f.parallel_seeds, "train seeds concurrently");
  auto* bench = app.add_subcommand("bench-shooting", "per-step runtime of vanilla against shooting");
  add_common(bench, f);
  bench->add_option("--workers", f.workers, "parallel segment workers");
  bench->add_option("--steps", f.steps, "step budget per model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (gen->parsed()) return cmd_generate(f);
    if (train->parsed()) return cmd_train(f);
    if (eval->parsed()) return cmd_evaluate(f);
    if (run->parsed()) return cmd_run(f);
    return cmd_bench(f);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
}
