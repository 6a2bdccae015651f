#include <cstdlib>
#include <doctest.h>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <sys/wait.h>

#include "gpode/cli/csv.hpp"
#include "gpode/cli/experiment.hpp"
#include "gpode/error.hpp"

using namespace gpode;
using namespace gpode::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("gpode_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig tiny(const fs::path& out) {
  auto c = parse_config(
      "[experiment]\nname = vdp-regular\nseeds = 0,1\n"
      "[data]\nn = 12\nforecast = 4\n"
      "[model]\nM = 4\nF = 16\n"
      "[train]\nsteps = 3\n"
      "[eval]\nsamples = 4\n");
  c.output = out.string();
  return c;
}

std::vector<std::string> keys_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.keys();
  }
  return {};
}

}  // namespace

TEST_CASE("config defaults follow each experiment protocol") {
  auto vdp = parse_config("[experiment]\nname = vdp-regular\n");
  CHECK(vdp.data.kind == systems::Kind::vdp);
  CHECK(vdp.data.n == 50);
  CHECK(vdp.data.t_end == 7.0);
  CHECK(vdp.data.noise_variance == 0.05);
  CHECK(vdp.data.forecast == 49);
  CHECK(vdp.train.inducing == 16);
  CHECK(vdp.train.features == 256);
  CHECK(vdp.train.objective == trainer::Objective::vanilla);
  CHECK(vdp.seeds.size() == 5);

  auto irr = parse_config("[experiment]\nname = vdp-irregular\n");
  CHECK(irr.data.grid == systems::Grid::uniform);

  auto fhn = parse_config("[experiment]\nname = fhn-mask\n");
  CHECK(fhn.data.kind == systems::Kind::fhn);
  CHECK(fhn.data.n == 25);
  CHECK(fhn.data.t_end == 5.0);
  CHECK(fhn.data.noise_variance == 0.025);
  CHECK(static_cast<bool>(fhn.data.mask));
  CHECK(fhn.data.forecast == 0);
  CHECK(fhn.train.steps == 10000);

  auto lng = parse_config("[experiment]\nname = vdp-long\n");
  CHECK(lng.data.n == 100);
  CHECK(lng.data.t_end == 25.0);
  CHECK(lng.data.noise_variance == 0.01);
  CHECK(lng.data.forecast == 50);
  CHECK(lng.train.objective == trainer::Objective::shooting);
  CHECK(lng.train.shooting_variance == 1e-6);
}

TEST_CASE("config overrides are applied") {
  auto c = parse_config(
      "[experiment]\nname = fhn-mask\nmodel = gpode-shooting\nseeds = 7, 9\nparallel_seeds = true\n"
      "[data]\nx0 = 0.5, -0.5\nmask = none\nn = 30\n"
      "[model]\nM = 8\nF = 64\ncovariance = diagonal\nshooting_variance = 1e-4\n"
      "[train]\nsteps = 10\nlr = 0.05\nsamples = 2\nsubsteps = 10\nworkers = 4\n"
      "[eval]\nsamples = 20\ntolerance = 1e-6\n");
  CHECK(c.train.objective == trainer::Objective::shooting);
  CHECK(c.seeds == std::vector<std::uint64_t>{7, 9});
  CHECK(c.parallel_seeds);
  CHECK(c.data.x0 == std::vector<double>{0.5, -0.5});
  CHECK_FALSE(static_cast<bool>(c.data.mask));
  CHECK(c.data.n == 30);
  CHECK(c.train.inducing == 8);
  CHECK(c.train.features == 64);
  CHECK(c.train.form == models::CovarianceForm::diagonal);
  CHECK(c.train.shooting_variance == 1e-4);
  CHECK(c.train.steps == 10);
  CHECK(c.train.lr == 0.05);
  CHECK(c.train.samples == 2);
  CHECK(c.train.substeps == 10);
  CHECK(c.train.workers == 4);
  CHECK(c.eval.samples == 20);
  CHECK(c.eval.tolerance == 1e-6);
}

TEST_CASE("config errors list the offending keys") {
  CHECK(keys_of("[experiment]\nname = vdp-regular\n[model]\nM = 0\n") == std::vector<std::string>{"model.M"});
  CHECK(keys_of("[experiment]\nname = vdp-regular\nbogus = 1\n[extra]\nx = 2\n") ==
        std::vector<std::string>{"experiment.bogus", "extra"});
  CHECK(keys_of("[experiment]\nname = vdp-regular\n[train]\nlr = fast\nsteps = -3\n") ==
        std::vector<std::string>{"train.steps", "train.lr"});
  CHECK(keys_of("[experiment]\nname = lorenz\n") == std::vector<std::string>{"experiment.name"});
  CHECK(keys_of("[experiment]\nmodel = gpode-vanilla\n") == std::vector<std::string>{"experiment.name"});
  CHECK(keys_of("[experiment]\nname = vdp-regular\n[data]\nn = 1\n[train]\nlr = 0\n") ==
        std::vector<std::string>{"data.n", "train.lr"});
  CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), IoError);
}

TEST_CASE("csv tables round trip byte-identically") {
  Table t;
  t.header = {"split", "a", "b"};
  t.rows.push_back({std::string("train"), 0.1, 1e-300});
  t.rows.push_back({std::string("test"), -3.0, 1.0 / 3.0});
  const auto text = t.str();
  CHECK(Table::parse(text).str() == text);
  CHECK(std::get<double>(Table::parse(text).rows[1][2]) == 1.0 / 3.0);
  CHECK_THROWS_AS(Table::parse("a,b\n1\n"), IoError);
}

TEST_CASE("run writes the results tree and its properties hold") {
  const auto dir = scratch_dir("run");
  const auto cfg = tiny(dir / "a");
  const auto results = run(cfg, true);
  REQUIRE(results.size() == 2);
  for (const auto& r : results) CHECK(r.ok);

  const auto root = dir / "a";
  for (const char* f : {"metrics.csv", "summary.json", "data/train.csv", "data/test.csv"})
    CHECK(fs::exists(root / f));
  for (const char* f : {"trace.csv", "timing.csv", "predictions.csv", "vectorfield.csv", "checkpoint.json"})
    CHECK(fs::exists(root / "seed-0" / f));

  SUBCASE("every csv round trips") {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.path().extension() != ".csv") continue;
      const auto text = slurp(e.path());
      CHECK_MESSAGE(Table::parse(text).str() == text, e.path().string());
    }
  }

  SUBCASE("metrics recompute from predictions") {
    const auto metrics = Table::read((root / "metrics.csv").string());
    for (const auto& row : metrics.rows) {
      const auto seed = static_cast<std::uint64_t>(std::get<double>(row[0]));
      const auto split = std::get<std::string>(row[1]);
      const auto pred = Table::read((root / ("seed-" + std::to_string(seed)) / "predictions.csv").string());
      std::vector<double> mean, var, obs;
      for (const auto& p : pred.rows) {
        if (std::get<std::string>(p[0]) != split) continue;
        for (std::size_t k = 0; k < 2; ++k) {
          mean.push_back(std::get<double>(p[2 + k]));
          var.push_back(std::get<double>(p[4 + k]));
          obs.push_back(std::get<double>(p[6 + k]));
        }
      }
      CHECK(std::abs(systems::mse(mean, obs) - std::get<double>(row[2])) <= 1e-12);
      CHECK(std::abs(systems::mnll(mean, var, obs) - std::get<double>(row[3])) <= 1e-12);
    }
  }

  SUBCASE("test split is the forecast horizon") {
    const auto pred = Table::read((root / "seed-0" / "predictions.csv").string());
    std::size_t test = 0;
    for (const auto& p : pred.rows)
      if (std::get<std::string>(p[0]) == "test") {
        ++test;
        CHECK(std::get<double>(p[1]) > 7.0);
      }
    CHECK(test == 4);
  }

  SUBCASE("summary reports mean and standard error") {
    const auto j = nlohmann::json::parse(slurp(root / "summary.json"));
    const double a = results[0].metrics[1].mse, b = results[1].metrics[1].mse;
    CHECK(j["metrics"]["test"]["mse"]["mean"].get<double>() == doctest::Approx((a + b) / 2).epsilon(1e-14));
    CHECK(j["metrics"]["test"]["mse"]["stderr"].get<double>() == doctest::Approx(std::abs(a - b) / 2).epsilon(1e-12));
    CHECK(j["seeds"].size() == 2);
    CHECK(j["failed_seeds"].empty());
  }

  SUBCASE("vector field covers the padded data box") {
    const auto vf = Table::read((root / "seed-0" / "vectorfield.csv").string());
    CHECK(vf.rows.size() == 625);
    const auto train = systems::read_csv((root / "data" / "train.csv").string());
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < train.size(); ++i) {
      lo = std::min(lo, train.values[2 * i]);
      hi = std::max(hi, train.values[2 * i]);
    }
    CHECK(std::get<double>(vf.rows.front()[0]) == doctest::Approx(lo - 0.15 * (hi - lo)));
    CHECK(std::get<double>(vf.rows.back()[0]) == doctest::Approx(hi + 0.15 * (hi - lo)));
    for (const auto& r : vf.rows) CHECK(std::get<double>(r[4]) >= 0.0);
  }

  SUBCASE("rerun and parallel seeds are byte-identical") {
    auto again = cfg;
    again.output = (dir / "b").string();
    again.parallel_seeds = true;
    run(again, true);
    for (const char* f : {"metrics.csv", "summary.json", "seed-0/trace.csv", "seed-1/predictions.csv",
                          "seed-1/vectorfield.csv", "seed-0/checkpoint.json", "data/train.csv"})
      CHECK_MESSAGE(slurp(root / f) == slurp(dir / "b" / f), f);
  }

  SUBCASE("evaluate from the checkpoint reproduces the run") {
    const auto data = make_dataset(cfg);
    const auto model = load_model(cfg, data, 1, seed_dir(cfg.output, 1));
    const auto ev = evaluate(cfg, data, model, 1);
    CHECK(ev.predictions_csv == slurp(root / "seed-1" / "predictions.csv"));
  }

  SUBCASE("datasets load from csv") {
    auto c = cfg;
    c.train_csv = (root / "data" / "train.csv").string();
    c.test_csv = (root / "data" / "test.csv").string();
    const auto loaded = make_dataset(c);
    const auto generated = make_dataset(cfg);
    CHECK(loaded.train.values == generated.train.values);
    CHECK(loaded.test.times == generated.test.times);
    c.train_csv = (root / "missing.csv").string();
    CHECK_THROWS_AS(make_dataset(c), IoError);
  }
  fs::remove_all(dir);
}

TEST_CASE("fhn test split holds the masked quadrant") {
  auto cfg = parse_config("[experiment]\nname = fhn-mask\n");
  const auto data = make_dataset(cfg);
  REQUIRE(data.test.size() > 0);
  CHECK(data.train.size() + data.test.size() == 25);
  for (std::size_t i = 0; i < data.test.size(); ++i) CHECK(systems::lower_right_quadrant(data.test_clean.row(i)));
}

TEST_CASE("bench-shooting with a one-step budget") {
  const auto dir = scratch_dir("bench");
  auto cfg = tiny(dir);
  cfg.train.steps = 1;
  const auto rep = bench_shooting(cfg, 0, true);
  const auto t = Table::parse(rep.runtime_csv);
  REQUIRE(t.rows.size() == 2);
  CHECK(std::get<std::string>(t.rows[0][0]) == "gpode-vanilla");
  CHECK(std::get<std::string>(t.rows[1][0]) == "gpode-shooting");
  CHECK(rep.vanilla_seconds > 0.0);
  CHECK(rep.speedup == doctest::Approx(rep.vanilla_seconds / rep.shooting_seconds));
  fs::remove_all(dir);
}

#ifdef GPODE_CLI_PATH
TEST_CASE("cli exit codes") {
  const auto dir = scratch_dir("exit");
  auto write = [&](const char* name, const char* text) {
    std::ofstream((dir / name).string()) << text;
    return (dir / name).string();
  };
  auto rc = [&](const std::string& args) {
    const std::string cmd = std::string(GPODE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };
  const auto bad = write("bad.ini", "[experiment]\nname = vdp-regular\n[model]\nM = 0\n");
  const auto good = write("good.ini",
                          "[experiment]\nname = vdp-regular\nseeds = 3\n[data]\nn = 8\nforecast = 2\n"
                          "[model]\nM = 3\nF = 8\n[train]\nsteps = 2\n[eval]\nsamples = 2\n");
  const auto out = (dir / "out").string();
  CHECK(rc("run --config " + bad) == 2);
  CHECK(rc("run --config " + (dir / "none.ini").string()) == 1);
  CHECK(rc("run --bogus") == 2);
  CHECK(rc("generate --config " + good + " --out " + out + "/data") == 0);
  CHECK(fs::exists(dir / "out" / "data" / "train.csv"));
  CHECK(rc("train --config " + good + " --out " + out) == 0);
  CHECK(fs::exists(dir / "out" / "seed-3" / "checkpoint.json"));
  CHECK(rc("evaluate --config " + good + " --out " + out) == 0);
  CHECK(fs::exists(dir / "out" / "seed-3" / "metrics.csv"));
  CHECK(rc("evaluate --config " + good + " --seed 4 --out " + out) == 1);
  CHECK(rc("run --config " + good + " --out " + out + "/run --workers 2") == 0);
  CHECK(rc("bench-shooting --config " + good + " --steps 1 --out " + out + "/bench") == 0);
  CHECK(fs::exists(dir / "out" / "bench" / "runtime.csv"));
  fs::remove_all(dir);
}
#endif
