#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gpode/models/elbo.hpp"
#include "gpode/models/init.hpp"
#include "gpode/trainer/adam.hpp"

namespace gpode::trainer {

enum class Objective { vanilla, shooting };

struct TrainConfig {
  double lr = 0.01;
  std::size_t steps = 5000;
  std::size_t samples = 1;  // S
  std::uint64_t seed = 0;
  Objective objective = Objective::vanilla;
  std::size_t substeps = 20;  // rk4 steps per mean observation interval
  double t_start = 0.0;
  std::size_t workers = 1;
  std::size_t inducing = 16;
  std::size_t features = 256;
  models::CovarianceForm form = models::CovarianceForm::full;
  double shooting_variance = 1e-6;
  std::size_t checkpoint_interval = 0;  // 0 disables
  std::string checkpoint_path;

  void validate() const;
  // Stable digest of every field that changes the optimization.
  std::uint64_t hash() const;
};

struct TraceRow {
  std::size_t step = 0;
  double seconds = 0.0;  // wall clock spent in this step
  double elbo = 0.0;
  models::ElboTerms terms;
  double lr = 0.0;
  bool skipped = false;
};

double min_lr();

// Owns the parameters and optimizer state of one run.
class Trainer {
 public:
  Trainer(TrainConfig config, systems::Trajectory traj);

  // Runs one iteration; failed objective evaluations skip the update and halve the rate.
  TraceRow step();
  // Steps until config.steps, writing checkpoints at the configured interval.
  std::vector<TraceRow> run(const std::function<void(const TraceRow&)>& on_step = {});

  const models::Model& model() const { return model_; }
  // Replaces the parameters; optimizer moments are kept.
  void set_model(models::Model model) { model_ = std::move(model); }
  const TrainConfig& config() const { return config_; }
  std::size_t steps_done() const { return step_; }
  double lr() const { return lr_; }
  models::ObjectiveOptions objective_options() const;

  std::string save() const;
  void save(const std::string& path) const;
  // Restores a checkpoint written by a trainer with the same config.
  static Trainer load(const std::string& json, TrainConfig config, systems::Trajectory traj);
  static Trainer load_file(const std::string& path, TrainConfig config, systems::Trajectory traj);

 private:
  models::Elbo evaluate(models::Model& tracked);

  TrainConfig config_;
  systems::Trajectory traj_;
  models::Model model_;
  AdamState adam_;
  models::Streams streams_;
  double lr_;
  double dt_;
  std::size_t step_ = 0;
};

}  // namespace gpode::trainer
