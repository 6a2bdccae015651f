#include "gpode/trainer/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gpode/error.hpp"
#include "json.hpp"

namespace gpode::trainer {
namespace {

using nlohmann::json;
constexpr int kCheckpointVersion = 1;
constexpr double kMinLr = 1e-4;

json shape_json(const ad::Shape& s) {
  json out = json::array();
  for (std::uint8_t i = 0; i < s.rank; ++i) out.push_back(s.dims[i]);
  return out;
}

ad::Shape shape_from(const json& j) {
  if (j.size() == 0) return ad::Shape::scalar();
  if (j.size() == 1) return ad::Shape::vector(j[0].get<std::size_t>());
  return ad::Shape::matrix(j[0].get<std::size_t>(), j[1].get<std::size_t>());
}

std::string engine_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng engine_from(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw IoError("checkpoint: bad rng state");
  return rng;
}

std::vector<double> flat(const ad::Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

double min_lr() { return kMinLr; }

void TrainConfig::validate() const {
  std::vector<std::string> bad;
  if (!(lr > 0)) bad.push_back("lr");
  if (steps < 1) bad.push_back("steps");
  if (samples < 1) bad.push_back("samples");
  if (substeps < 1) bad.push_back("substeps");
  if (workers < 1) bad.push_back("workers");
  if (inducing < 1) bad.push_back("M");
  if (features < 1) bad.push_back("F");
  if (!(shooting_variance > 0)) bad.push_back("shooting_variance");
  if (!bad.empty()) {
    std::string msg = "invalid training settings:";
    for (const auto& k : bad) msg += " " + k;
    throw ConfigError(msg, bad);
  }
}

std::uint64_t TrainConfig::hash() const {
  std::string s;
  auto put = [&](auto v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    s.append(buf, r.ptr);
    s += ';';
  };
  put(lr);
  put(samples);
  put(seed);
  put(static_cast<int>(objective));
  put(substeps);
  put(t_start);
  put(inducing);
  put(features);
  put(static_cast<int>(form));
  put(shooting_variance);
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

Trainer::Trainer(TrainConfig config, systems::Trajectory traj)
    : config_(std::move(config)), traj_(std::move(traj)), streams_(models::Streams::from_seed(config_.seed)),
      lr_(config_.lr) {
  config_.validate();
  traj_.validate();
  models::InitOptions io;
  io.inducing = config_.inducing;
  io.features = config_.features;
  io.shooting = config_.objective == Objective::shooting ? traj_.size() : 1;
  io.form = config_.form;
  Rng init = substream(config_.seed, "init");
  model_ = models::init_model(traj_, io, init);
  model_.noise.shooting_variance = config_.shooting_variance;
  dt_ = models::training_step(traj_, config_.t_start, config_.substeps);
}

models::ObjectiveOptions Trainer::objective_options() const {
  models::ObjectiveOptions o;
  o.samples = config_.samples;
  o.t_start = config_.t_start;
  o.solver.method = odeint::Method::rk4;
  o.solver.dt = dt_;
  o.workers = config_.workers;
  return o;
}

models::Elbo Trainer::evaluate(models::Model& tracked) {
  const auto opt = objective_options();
  return config_.objective == Objective::shooting ? models::elbo_shooting(traj_, tracked, streams_, opt)
                                                  : models::elbo_vanilla(traj_, tracked, streams_, opt);
}

TraceRow Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  TraceRow row;
  row.step = step_ + 1;
  row.lr = lr_;
  try {
    ad::Tape tape;
    models::Model tracked = model_;
    auto ps = tracked.params();
    for (auto* p : ps) *p = tape.leaf(*p);
    auto elbo = evaluate(tracked);
    row.elbo = elbo.value.item();
    row.terms = elbo.terms;
    if (!std::isfinite(row.elbo)) throw NumericalError("non-finite objective");
    auto grads = tape.backward(elbo.value);

    std::vector<std::vector<double>> values, descent;
    for (auto* p : ps) {
      values.push_back(flat(*p));
      auto g = grads.of(*p);
      std::vector<double> neg(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(g[i])) throw NumericalError("non-finite gradient");
        neg[i] = -g[i];
      }
      descent.push_back(std::move(neg));
    }
    adam_step(values, descent, adam_, lr_);
    auto targets = model_.params();
    for (std::size_t k = 0; k < targets.size(); ++k) *targets[k] = ad::Tensor(targets[k]->shape(), std::move(values[k]));
  } catch (const NumericalError& e) {
    row.skipped = true;
    lr_ = std::max(lr_ * 0.5, kMinLr);
    std::clog << "step " << row.step << ": " << e.what() << "; update skipped, lr now " << lr_ << "\n";
  }
  ++step_;
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

std::vector<TraceRow> Trainer::run(const std::function<void(const TraceRow&)>& on_step) {
  std::vector<TraceRow> trace;
  while (step_ < config_.steps) {
    trace.push_back(step());
    if (on_step) on_step(trace.back());
    if (config_.checkpoint_interval && !config_.checkpoint_path.empty() && step_ % config_.checkpoint_interval == 0)
      save(config_.checkpoint_path);
  }
  return trace;
}

std::string Trainer::save() const {
  json j;
  j["format"] = "gpode-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config_hash"] = config_.hash();
  j["step"] = step_;
  j["lr"] = lr_;
  j["features"] = model_.features;
  j["form"] = model_.states.form == models::CovarianceForm::full ? "full" : "diagonal";
  j["shooting_variance"] = model_.noise.shooting_variance;
  j["adam_t"] = adam_.t;
  const auto& names = models::Model::param_names();
  auto ps = model_.params();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    j["params"][names[k]] = {{"shape", shape_json(ps[k]->shape())}, {"values", flat(*ps[k])}};
    if (!adam_.m.empty()) {
      j["adam_m"][names[k]] = adam_.m[k];
      j["adam_v"][names[k]] = adam_.v[k];
    }
  }
  j["rng"] = {{"path", engine_state(streams_.path)}, {"states", engine_state(streams_.states)}};
  return j.dump(1);
}

void Trainer::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out << save();
    if (!out) throw IoError("checkpoint write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move checkpoint into " + path);
}

Trainer Trainer::load(const std::string& text, TrainConfig config, systems::Trajectory traj) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint is not valid json: ") + e.what());
  }
  try {
    if (j.at("format") != "gpode-checkpoint" || j.at("version") != kCheckpointVersion)
      throw IoError("unsupported checkpoint format");
    if (j.at("config_hash").get<std::uint64_t>() != config.hash())
      throw ConfigError("checkpoint was written under a different configuration");
    Trainer t(std::move(config), std::move(traj));
    t.step_ = j.at("step").get<std::size_t>();
    t.lr_ = j.at("lr").get<double>();
    t.model_.features = j.at("features").get<std::size_t>();
    t.model_.noise.shooting_variance = j.at("shooting_variance").get<double>();
    t.adam_ = {};
    t.adam_.t = j.at("adam_t").get<std::uint64_t>();
    const auto& names = models::Model::param_names();
    auto ps = t.model_.params();
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const auto& e = j.at("params").at(names[k]);
      *ps[k] = ad::Tensor(shape_from(e.at("shape")), e.at("values").get<std::vector<double>>());
      if (j.contains("adam_m")) {
        t.adam_.m.push_back(j["adam_m"].at(names[k]).get<std::vector<double>>());
        t.adam_.v.push_back(j["adam_v"].at(names[k]).get<std::vector<double>>());
      }
    }
    t.streams_.path = engine_from(j.at("rng").at("path").get<std::string>());
    t.streams_.states = engine_from(j.at("rng").at("states").get<std::string>());
    return t;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  }
}

Trainer Trainer::load_file(const std::string& path, TrainConfig config, systems::Trajectory traj) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load(ss.str(), std::move(config), std::move(traj));
}

}  // namespace gpode::trainer
