#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpode/models/predict.hpp"
#include "gpode/systems/systems.hpp"
#include "gpode/trainer/trainer.hpp"

namespace gpode::cli {

enum class Experiment { vdp_regular, vdp_irregular, fhn_mask, vdp_long };

Experiment parse_experiment(const std::string& name);
std::string experiment_name(Experiment e);
trainer::Objective parse_model(const std::string& name);
std::string model_name(trainer::Objective o);

struct EvalConfig {
  std::size_t samples = 50;
  double tolerance = 1e-5;  // dopri5 rtol = atol
};

struct ExperimentConfig {
  Experiment experiment = Experiment::vdp_regular;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::string output = "results";
  std::uint64_t data_seed = 0;
  std::string train_csv;  // load instead of generating when set
  std::string test_csv;
  bool parallel_seeds = false;
  systems::SystemSpec data;
  trainer::TrainConfig train;  // objective, M, F and optimizer settings
  EvalConfig eval;

  void validate() const;
};

// Protocol defaults of each experiment.
ExperimentConfig defaults(Experiment e);

// INI text with sections [experiment], [data], [model], [train], [eval]. Unknown
// keys and invalid values raise ConfigError listing the offending keys.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

systems::Dataset make_dataset(const ExperimentConfig& cfg);

struct SplitMetrics {
  std::string split;
  double mse = 0.0;
  double mnll = 0.0;
};

struct Evaluation {
  std::vector<SplitMetrics> metrics;  // train, then test
  std::string predictions_csv;
  std::string vectorfield_csv;
};

// Predicts at train and test times from q(x0) and evaluates both splits.
Evaluation evaluate(const ExperimentConfig& cfg, const systems::Dataset& data, const models::Model& model,
                    std::uint64_t seed);

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<SplitMetrics> metrics;
};

// Per-seed output directory under the run output.
std::string seed_dir(const std::string& out, std::uint64_t seed);

// Trains one seed and writes trace.csv, timing.csv and checkpoint.json to `dir`.
trainer::Trainer train_seed(const ExperimentConfig& cfg, const systems::Dataset& data, std::uint64_t seed,
                            const std::string& dir, bool quiet = false);
// Parameters from the checkpoint that train_seed left in `dir`.
models::Model load_model(const ExperimentConfig& cfg, const systems::Dataset& data, std::uint64_t seed,
                         const std::string& dir);
// Writes predictions.csv, vectorfield.csv and metrics.csv to `dir`.
SeedResult evaluate_seed(const ExperimentConfig& cfg, const systems::Dataset& data, std::uint64_t seed,
                         const std::string& dir, const models::Model& model);

// Trains and evaluates one seed. Numerical failures are reported in the result.
SeedResult run_seed(const ExperimentConfig& cfg, const systems::Dataset& data, std::uint64_t seed,
                    const std::string& dir, bool quiet = false);

// End-to-end run over every seed. Returns the results in seed order.
std::vector<SeedResult> run(const ExperimentConfig& cfg, bool quiet = false);

std::string metrics_csv(const std::vector<SeedResult>& results);
std::string summary_json(const ExperimentConfig& cfg, const std::vector<SeedResult>& results);

struct BenchReport {
  double vanilla_seconds = 0.0;  // mean per step
  double shooting_seconds = 0.0;
  double speedup = 0.0;          // vanilla over shooting
  std::string runtime_csv;
};

BenchReport bench_shooting(const ExperimentConfig& cfg, std::uint64_t seed, bool quiet = false);

}  // namespace gpode::cli
