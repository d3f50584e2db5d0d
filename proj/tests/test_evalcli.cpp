#include <doctest.h>

#include <cmath>
#include <fstream>

#include "blurcast/checkpoint.hpp"
#include "blurcast/config.hpp"
#include "blurcast/experiment.hpp"
#include "blurcast/metrics.hpp"
#include "cli_helpers.hpp"

using namespace blurcast;
using blurcast::testing::fresh_dir;
using blurcast::testing::run_cli;
using blurcast::testing::slurp;
namespace fs = std::filesystem;

namespace {

nlohmann::json tiny_config_json() {
  return {{"variants", {"FORECAST_ONLY", "DG"}},
          {"kappa", 12},
          {"tau", 4},
          {"d_model", 8},
          {"n_heads", 2},
          {"M", 4},
          {"batch", 16},
          {"epochs", 2},
          {"warmup", 20},
          {"seeds", {1, 2, 3}},
          {"dataset", {{"source", "synthetic"}, {"windows", 60}, {"noise", 0.1}}}};
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("mse and mae hand values") {
  const std::vector<double> a{0, 0}, b{1, 1}, c{1, -1}, d{1, 4}, e{2, 2};
  CHECK(metrics::mse(a, a) == 0.0);
  CHECK(metrics::mse(a, b) == 1.0);
  CHECK(metrics::mse(d, e) == 2.5);
  CHECK(metrics::mae(a, a) == 0.0);
  CHECK(metrics::mae(a, c) == 1.0);
  CHECK(metrics::mae(d, e) == 1.5);
  CHECK_THROWS_AS(metrics::mse(a, std::vector<double>{1}), ShapeError);
  CHECK_THROWS_AS(metrics::mae(std::vector<double>{}, std::vector<double>{}), ShapeError);

  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto x = uniform({20}, -3, 3, rng).values(), y = uniform({20}, -3, 3, rng).values();
    CHECK(metrics::mae(x, y) <= std::sqrt(metrics::mse(x, y)) + 1e-15);
    CHECK(metrics::mse(x, y) > 0.0);
  }
}

TEST_CASE("mean and standard error") {
  const std::vector<double> one{0.7};
  CHECK(metrics::mean_stderr(one).mean == 0.7);
  CHECK(metrics::mean_stderr(one).stderr_ == 0.0);
  const std::vector<double> three{1.0, 2.0, 4.0};
  const auto m = metrics::mean_stderr(three);
  CHECK(m.mean == doctest::Approx(7.0 / 3.0));
  // sample variance = ((4/3)^2 + (1/3)^2 + (5/3)^2) / 2 = 7/3
  CHECK(m.stderr_ == doctest::Approx(std::sqrt(7.0 / 3.0) / std::sqrt(3.0)).epsilon(1e-14));
}

TEST_CASE("aggregation over seeds") {
  auto run = [](pipeline::Variant v, std::size_t tau, std::uint64_t seed, double mse, double mae, bool ok = true) {
    metrics::RunMetrics r;
    r.variant = v, r.tau = tau, r.seed = seed, r.mse = mse, r.mae = mae, r.ok = ok, r.config_hash = "abc";
    if (!ok) r.error = "boom";
    return r;
  };
  using pipeline::Variant;
  const std::vector<metrics::RunMetrics> runs{
      run(Variant::DG, 24, 3, 0.30, 0.5), run(Variant::ForecastOnly, 12, 1, 0.9, 0.8),
      run(Variant::DG, 24, 1, 0.10, 0.3), run(Variant::DG, 24, 2, 0.20, 0.4),
      run(Variant::DI, 12, 1, 0.4, 0.6),  run(Variant::DI, 12, 2, 0.0, 0.0, false),
      run(Variant::DG, 12, 1, 0.5, 0.6)};
  const auto rows = metrics::aggregate(runs);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].variant == Variant::ForecastOnly);
  CHECK(rows[1].variant == Variant::DG);
  CHECK(rows[1].tau == 12);
  CHECK(rows[2].tau == 24);
  CHECK(rows[3].variant == Variant::DI);

  const auto& dg = rows[2];
  CHECK(dg.seeds == 3);
  CHECK(dg.seed_list == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(dg.mse_mean == doctest::Approx(0.2));
  CHECK(dg.mse_stderr == doctest::Approx(0.1 / std::sqrt(3.0)).epsilon(1e-12));
  CHECK(dg.mae_stderr == doctest::Approx(0.1 / std::sqrt(3.0)).epsilon(1e-12));
  CHECK(rows[0].mse_stderr == 0.0);
  CHECK(rows[0].mae_stderr == 0.0);
  CHECK(!rows[3].complete);
  CHECK(rows[3].seeds == 1);
  CHECK(rows[3].mse_mean == 0.4);
  CHECK(dg.config_hash == "abc");

  const auto dir = fresh_dir("report_unit");
  metrics::write_report_csv(dir / "report.csv", rows);
  const auto text = slurp(dir / "report.csv");
  CHECK(text.rfind("variant,tau,seeds,mse_mean,mse_stderr,mae_mean,mae_stderr,config_hash,seed_list,complete\n", 0) ==
        0);
  CHECK(text.find("DG,24,3,") != std::string::npos);
  CHECK(text.find("1;2;3") != std::string::npos);
  CHECK(line_count(text) == 5);
}

TEST_CASE("run metrics survive a json round trip exactly") {
  metrics::RunMetrics r;
  r.variant = pipeline::Variant::RB, r.tau = 24, r.seed = 9, r.ok = true;
  r.mse = 0.1 + 0.2, r.mae = std::nextafter(1.0 / 3.0, 1.0), r.incidents = 2, r.best_epoch = 17, r.config_hash = "f00";
  const auto back = metrics::run_metrics_from_json(nlohmann::json::parse(metrics::to_json(r).dump()));
  CHECK(back.variant == r.variant);
  CHECK(back.mse == r.mse);
  CHECK(back.mae == r.mae);
  CHECK(back.incidents == 2);
  CHECK(back.best_epoch == 17);
  CHECK(back.config_hash == "f00");
}

TEST_CASE("config parsing") {
  const auto cfg = config::ExperimentConfig::from_json(tiny_config_json());
  CHECK(cfg.variants.size() == 2);
  CHECK(cfg.taus == std::vector<std::size_t>{4});
  CHECK(cfg.inducing == 4);
  CHECK(config::ExperimentConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());

  const config::ExperimentConfig def;
  CHECK(def.lambda == 0.001);
  CHECK(def.seeds.size() == 3);
  CHECK(def.epochs == 50);
  CHECK(def.n_heads == 8);

  auto bad = tiny_config_json();
  bad["learning_rate"] = 0.1;
  CHECK_THROWS_AS(config::ExperimentConfig::from_json(bad), config::ConfigError);
  bad = tiny_config_json();
  bad["dataset"]["colour"] = "red";
  CHECK_THROWS_AS(config::ExperimentConfig::from_json(bad), config::ConfigError);
  bad = tiny_config_json();
  bad["seeds"] = nlohmann::json::array();
  CHECK_THROWS(config::ExperimentConfig::from_json(bad).validate());
  bad = tiny_config_json();
  bad["variant"] = "NOPE";
  bad.erase("variants");
  CHECK_THROWS(config::ExperimentConfig::from_json(bad));

  auto a = cfg, b = cfg;
  b.out = "elsewhere";
  CHECK(a.hash() == b.hash());
  b.lambda = 0.0;
  CHECK(a.hash() != b.hash());
  CHECK(a.hash().size() == 16);
}

TEST_CASE("synthetic datasets yield the configured window count") {
  auto cfg = config::ExperimentConfig::from_json(tiny_config_json());
  cfg.dataset.series = 2;
  const auto series = config::load_dataset(cfg.dataset, {cfg.kappa, 4, 1});
  REQUIRE(series.size() == 2);
  CHECK(data::window_count(series[0].length(), {cfg.kappa, 4, 1}) == 60);
  CHECK(series[0].values != series[1].values);
  const auto prepared = experiment::prepare_data(cfg, 4);
  CHECK(prepared.split.train.size() == 96);
  CHECK(prepared.split.validation.size() == 12);
  CHECK(prepared.split.test.size() == 12);
}

TEST_CASE("normalized metrics agree after invert and renormalize") {
  auto cfg = config::ExperimentConfig::from_json(tiny_config_json());
  const auto prepared = experiment::prepare_data(cfg, 4);
  const auto params = pipeline::init_model(pipeline::Variant::ForecastOnly, cfg.train_config(pipeline::Variant::ForecastOnly, 4, 1).hyper, 1);
  const auto ev = experiment::evaluate_test(params, prepared.split.test, 1, 1);
  const auto& norm = prepared.normalizers.front();
  std::vector<double> y, yhat;
  for (std::size_t k = 0; k < prepared.split.test.size(); ++k) {
    for (std::size_t h = 0; h < 4; ++h) {
      y.push_back(norm.apply(norm.invert(prepared.split.test[k].y_future[h])));
      yhat.push_back(norm.apply(norm.invert(ev.predictions[k].y_d[h])));
    }
  }
  CHECK(std::abs(metrics::mse(y, yhat) - ev.mse) < 1e-10);
  CHECK(std::abs(metrics::mae(y, yhat) - ev.mae) < 1e-10);
}

TEST_CASE("experiment writes per-run artifacts and a report that regenerates identically") {
  const auto dir = fresh_dir("experiment");
  auto cfg = config::ExperimentConfig::from_json(tiny_config_json());
  const auto rows = experiment::run_experiment(cfg, dir);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.complete);
    CHECK(r.seeds == 3);
    CHECK(r.mse_stderr > 0.0);
    CHECK(r.config_hash == cfg.hash());
  }
  const auto run = dir / "runs" / experiment::run_name(pipeline::Variant::DG, 4, 2);
  for (const char* f : {"history.csv", "predictions.csv", "checkpoint.txt", "metrics.json"})
    CHECK(fs::exists(run / f));
  CHECK(line_count(slurp(run / "history.csv")) == 3);
  const auto preds = slurp(run / "predictions.csv");
  CHECK(preds.rfind("window,series,start,step,y_true,y_f,y_b,y_d\n", 0) == 0);
  CHECK(line_count(preds) == 1 + 2 * 4);  // windows 0 and 4 of 6

  const auto inline_report = slurp(dir / "report.csv");
  fs::remove(dir / "report.csv");
  experiment::regenerate_report(dir);
  CHECK(slurp(dir / "report.csv") == inline_report);

  // the stored metrics reproduce from the checkpoint
  const auto ck = checkpoint::read(run / "checkpoint.txt");
  auto params = pipeline::init_model(pipeline::Variant::DG, cfg.train_config(pipeline::Variant::DG, 4, 2).hyper, 2);
  checkpoint::load_into(ck, params);
  const auto ev = experiment::evaluate_test(params, experiment::prepare_data(cfg, 4).split.test, 1, 2);
  const auto m = metrics::run_metrics_from_json(nlohmann::json::parse(slurp(run / "metrics.json")));
  CHECK(ev.mse == m.mse);
  CHECK(ev.mae == m.mae);
}

TEST_CASE("failed runs are recorded and flagged") {
  const auto dir = fresh_dir("failing");
  const auto cfg = config::ExperimentConfig::from_json(tiny_config_json());
  auto prepared = experiment::prepare_data(cfg, 4);
  const auto good = experiment::run_single(cfg, pipeline::Variant::ForecastOnly, 4, 1, prepared, dir / "good");
  prepared.split.train.clear();
  const auto bad = experiment::run_single(cfg, pipeline::Variant::ForecastOnly, 4, 2, prepared, dir / "bad");
  CHECK(good.ok);
  CHECK(!bad.ok);
  CHECK(!bad.error.empty());
  const auto stored = metrics::run_metrics_from_json(nlohmann::json::parse(slurp(dir / "bad" / "metrics.json")));
  CHECK(!stored.ok);
  CHECK(stored.error == bad.error);
  const auto rows = metrics::aggregate({good, bad});
  REQUIRE(rows.size() == 1);
  CHECK(!rows[0].complete);
  CHECK(rows[0].seeds == 1);
  CHECK(rows[0].mse_mean == good.mse);
}

TEST_CASE("cli exit codes") {
  const auto dir = fresh_dir("cli_codes");
  CHECK(run_cli("frobnicate", dir).code == 2);
  CHECK(run_cli("", dir).code == 2);
  const auto unknown = run_cli("train --no-such-flag", dir);
  CHECK(unknown.code == 2);
  CHECK(unknown.err.rfind("usage error:", 0) == 0);
  const auto missing = run_cli("train --config " + (dir / "absent.json").string(), dir);
  CHECK(missing.code == 1);
  CHECK(missing.err.rfind("error: ", 0) == 0);
  CHECK(line_count(missing.err) == 1);
  CHECK(run_cli("train --variant NOPE", dir).code == 1);
}

TEST_CASE("cli synth-data writes the csv dialect") {
  const auto dir = fresh_dir("cli_synth");
  const auto csv = dir / "s.csv";
  const auto r = run_cli("synth-data --kind sawtooth --length 100 --seed 4 --out " + csv.string(), dir);
  CHECK(r.code == 0);
  const auto s = data::load_csv(csv, "value", "timestamp");
  CHECK(s.values == data::synth_series(data::SynthKind::Sawtooth, 100, 4, 0.1).values);
}

TEST_CASE("cli train is deterministic per seed and eval reproduces its metrics") {
  const auto dir = fresh_dir("cli_train");
  auto j = tiny_config_json();
  j["variants"] = {"DI"};
  const auto cfg = write_config(dir, j);
  const std::string base = "train --config " + cfg.string() + " --seed 7 --out ";
  const auto a = run_cli(base + (dir / "a").string(), dir / "a_log");
  const auto b = run_cli(base + (dir / "b").string(), dir / "b_log");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const auto run = fs::path("runs") / "DI_tau4_seed7";
  CHECK(slurp(dir / "a" / run / "history.csv") == slurp(dir / "b" / run / "history.csv"));
  CHECK(slurp(dir / "a" / run / "predictions.csv") == slurp(dir / "b" / run / "predictions.csv"));
  CHECK(!fs::exists(dir / "a" / "runs" / "DI_tau4_seed1"));

  const auto trained = nlohmann::json::parse(a.out);
  const auto ev = run_cli("eval --config " + cfg.string() + " --checkpoint " + (dir / "a" / run / "checkpoint.txt").string(),
                          dir / "eval_log");
  REQUIRE(ev.code == 0);
  const auto scored = nlohmann::json::parse(ev.out);
  CHECK(scored["mse"] == trained["mse"]);
  CHECK(scored["mae"] == trained["mae"]);
  CHECK(scored["seed"] == 7);
}

TEST_CASE("cli ablate on the grid fixture emits one row per variant and horizon") {
  const auto dir = fresh_dir("cli_grid");
  const auto r = run_cli("ablate --config " + std::string(BLURCAST_SOURCE_DIR) + "/configs/grid_small.json --out " +
                             (dir / "out").string(),
                         dir);
  CHECK(r.code == 0);
  const auto report = slurp(dir / "out" / "report.csv");
  CHECK(line_count(report) == 1 + 12);
  for (const char* v : {"FORECAST_ONLY", "DG", "DI", "DWC", "RB", "DT"}) {
    CHECK(report.find(std::string("\n") + v + ",12,1,") != std::string::npos);
    CHECK(report.find(std::string("\n") + v + ",24,1,") != std::string::npos);
  }

  const auto again = run_cli("report --out " + (dir / "out").string(), dir / "report_log");
  CHECK(again.code == 0);
  CHECK(slurp(dir / "out" / "report.csv") == report);
}
