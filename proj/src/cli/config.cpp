#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gpode/cli/experiment.hpp"
#include "gpode/error.hpp"

namespace gpode::cli {
namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"experiment", {"name", "model", "seeds", "output", "data_seed", "train_csv", "test_csv", "parallel_seeds"}},
      {"data", {"system", "x0", "t_start", "t_end", "grid", "n", "noise_variance", "mask", "forecast"}},
      {"model", {"M", "F", "covariance", "shooting_variance"}},
      {"train", {"steps", "lr", "samples", "substeps", "workers", "checkpoint_interval"}},
      {"eval", {"samples", "tolerance"}},
  };
  return s;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size())
    throw ConfigError("invalid value for " + key + ": '" + text + "'", {key});
  return v;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(parse_number<T>(key, b == std::string::npos ? "" : item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw ConfigError("empty list for " + key, {key});
  return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("invalid value for " + key + ": '" + text + "'", {key});
}

std::string train_key(const std::string& k) {
  static const std::map<std::string, std::string> m{
      {"lr", "train.lr"},         {"steps", "train.steps"},     {"samples", "train.samples"},
      {"substeps", "train.substeps"}, {"workers", "train.workers"}, {"M", "model.M"},
      {"F", "model.F"},           {"shooting_variance", "model.shooting_variance"}};
  auto it = m.find(k);
  return it == m.end() ? k : it->second;
}

}  // namespace

Experiment parse_experiment(const std::string& name) {
  if (name == "vdp-regular") return Experiment::vdp_regular;
  if (name == "vdp-irregular") return Experiment::vdp_irregular;
  if (name == "fhn-mask") return Experiment::fhn_mask;
  if (name == "vdp-long") return Experiment::vdp_long;
  throw ConfigError("unknown experiment '" + name + "'", {"experiment.name"});
}

std::string experiment_name(Experiment e) {
  switch (e) {
    case Experiment::vdp_regular: return "vdp-regular";
    case Experiment::vdp_irregular: return "vdp-irregular";
    case Experiment::fhn_mask: return "fhn-mask";
    case Experiment::vdp_long: return "vdp-long";
  }
  return "";
}

trainer::Objective parse_model(const std::string& name) {
  if (name == "gpode-vanilla") return trainer::Objective::vanilla;
  if (name == "gpode-shooting") return trainer::Objective::shooting;
  throw ConfigError("unknown model '" + name + "'", {"experiment.model"});
}

std::string model_name(trainer::Objective o) {
  return o == trainer::Objective::vanilla ? "gpode-vanilla" : "gpode-shooting";
}

ExperimentConfig defaults(Experiment e) {
  ExperimentConfig c;
  c.experiment = e;
  c.output = "results/" + experiment_name(e);
  auto& d = c.data;
  switch (e) {
    case Experiment::vdp_regular:
      d.forecast = 49;
      break;
    case Experiment::vdp_irregular:
      d.grid = systems::Grid::uniform;
      d.forecast = 49;
      break;
    case Experiment::fhn_mask:
      d.kind = systems::Kind::fhn;
      d.x0 = {-1.0, 1.0};
      d.t_end = 5.0;
      d.n = 25;
      d.noise_variance = 0.025;
      d.mask = systems::lower_right_quadrant;
      c.train.steps = 10000;
      break;
    case Experiment::vdp_long:
      d.t_end = 25.0;
      d.n = 100;
      d.noise_variance = 0.01;
      d.forecast = 50;
      c.train.objective = trainer::Objective::shooting;
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  std::vector<std::string> bad;
  if (seeds.empty()) bad.push_back("experiment.seeds");
  if (output.empty()) bad.push_back("experiment.output");
  if (!test_csv.empty() && train_csv.empty()) bad.push_back("experiment.train_csv");
  if (eval.samples == 0) bad.push_back("eval.samples");
  if (!(eval.tolerance > 0.0)) bad.push_back("eval.tolerance");
  try {
    data.validate();
  } catch (const ConfigError& err) {
    for (const auto& k : err.keys()) bad.push_back("data." + k);
    if (err.keys().empty()) bad.push_back("data");
  }
  try {
    train.validate();
  } catch (const ConfigError& err) {
    for (const auto& k : err.keys()) bad.push_back(train_key(k));
  }
  if (!bad.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& k : bad) msg += " " + k;
    throw ConfigError(msg, bad);
  }
}

ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& err) {
    throw ConfigError(std::string("malformed config: ") + err.what());
  }

  std::vector<std::string> unknown;
  std::map<std::string, std::string> kv;
  for (const auto& [section, body] : tree) {
    auto it = schema().find(section);
    if (body.empty() || it == schema().end()) {
      unknown.push_back(section);
      continue;
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!it->second.count(key))
        unknown.push_back(full);
      else
        kv[full] = value.get_value<std::string>();
    }
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg, unknown);
  }

  auto get = [&](const std::string& k) -> const std::string* {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };
  const auto* name = get("experiment.name");
  if (!name) throw ConfigError("missing experiment.name", {"experiment.name"});
  ExperimentConfig c = defaults(parse_experiment(*name));

  // Every key is checked so that one error lists all bad values.
  std::vector<std::string> bad;
  auto with = [&](const std::string& k, auto&& apply) {
    if (const auto* v = get(k)) {
      try {
        apply(*v);
      } catch (const ConfigError&) {
        bad.push_back(k);
      }
    }
  };
  with("experiment.model", [&](const std::string& v) { c.train.objective = parse_model(v); });
  with("experiment.seeds", [&](const std::string& v) { c.seeds = parse_list<std::uint64_t>("experiment.seeds", v); });
  with("experiment.output", [&](const std::string& v) { c.output = v; });
  with("experiment.data_seed", [&](const std::string& v) { c.data_seed = parse_number<std::uint64_t>("", v); });
  with("experiment.train_csv", [&](const std::string& v) { c.train_csv = v; });
  with("experiment.test_csv", [&](const std::string& v) { c.test_csv = v; });
  with("experiment.parallel_seeds", [&](const std::string& v) { c.parallel_seeds = parse_bool("", v); });

  with("data.system", [&](const std::string& v) { c.data.kind = systems::parse_kind(v); });
  with("data.x0", [&](const std::string& v) { c.data.x0 = parse_list<double>("", v); });
  with("data.t_start", [&](const std::string& v) { c.data.t_start = parse_number<double>("", v); });
  with("data.t_end", [&](const std::string& v) { c.data.t_end = parse_number<double>("", v); });
  with("data.grid", [&](const std::string& v) {
    if (v == "regular")
      c.data.grid = systems::Grid::regular;
    else if (v == "uniform")
      c.data.grid = systems::Grid::uniform;
    else
      throw ConfigError("grid");
  });
  with("data.n", [&](const std::string& v) { c.data.n = parse_number<std::size_t>("", v); });
  with("data.noise_variance", [&](const std::string& v) { c.data.noise_variance = parse_number<double>("", v); });
  with("data.mask", [&](const std::string& v) {
    if (v == "none")
      c.data.mask = nullptr;
    else if (v == "lower-right")
      c.data.mask = systems::lower_right_quadrant;
    else
      throw ConfigError("mask");
  });
  with("data.forecast", [&](const std::string& v) { c.data.forecast = parse_number<std::size_t>("", v); });

  with("model.M", [&](const std::string& v) { c.train.inducing = parse_number<std::size_t>("", v); });
  with("model.F", [&](const std::string& v) { c.train.features = parse_number<std::size_t>("", v); });
  with("model.covariance", [&](const std::string& v) {
    if (v == "full")
      c.train.form = models::CovarianceForm::full;
    else if (v == "diagonal")
      c.train.form = models::CovarianceForm::diagonal;
    else
      throw ConfigError("covariance");
  });
  with("model.shooting_variance",
       [&](const std::string& v) { c.train.shooting_variance = parse_number<double>("", v); });

  with("train.steps", [&](const std::string& v) { c.train.steps = parse_number<std::size_t>("", v); });
  with("train.lr", [&](const std::string& v) { c.train.lr = parse_number<double>("", v); });
  with("train.samples", [&](const std::string& v) { c.train.samples = parse_number<std::size_t>("", v); });
  with("train.substeps", [&](const std::string& v) { c.train.substeps = parse_number<std::size_t>("", v); });
  with("train.workers", [&](const std::string& v) { c.train.workers = parse_number<std::size_t>("", v); });
  with("train.checkpoint_interval",
       [&](const std::string& v) { c.train.checkpoint_interval = parse_number<std::size_t>("", v); });

  with("eval.samples", [&](const std::string& v) { c.eval.samples = parse_number<std::size_t>("", v); });
  with("eval.tolerance", [&](const std::string& v) { c.eval.tolerance = parse_number<double>("", v); });

  if (!bad.empty()) {
    std::string msg = "invalid config values:";
    for (const auto& k : bad) msg += " " + k;
    throw ConfigError(msg, bad);
  }
  c.train.t_start = c.data.t_start;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace gpode::cli
