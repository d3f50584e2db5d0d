#include "blurcast/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "blurcast/checkpoint.hpp"
#include "blurcast/train.hpp"

namespace blurcast::experiment {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_history(const fs::path& path, const std::vector<pipeline::EpochRecord>& history) {
  std::ofstream out(path);
  out << "epoch,train_loss,val_mse\n";
  for (const auto& r : history) out << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.val_mse) << '\n';
}

void write_predictions(const fs::path& path, const std::vector<data::TimeSeriesWindow>& test,
                       const std::vector<pipeline::Prediction>& preds, std::size_t tau) {
  std::ofstream out(path);
  out << "window,series,start,step,y_true,y_f,y_b,y_d\n";
  for (std::size_t w = 0; w < test.size(); w += tau) {
    const auto& p = preds[w];
    for (std::size_t h = 0; h < test[w].tau(); ++h) {
      out << w << ',' << test[w].series << ',' << test[w].start << ',' << h << ',' << fmt(test[w].y_future[h]) << ','
          << fmt(p.y_f[h]) << ',' << (p.y_b ? fmt((*p.y_b)[h]) : std::string()) << ',' << fmt(p.y_d[h]) << '\n';
    }
  }
}

void write_metrics(const fs::path& path, const metrics::RunMetrics& m) {
  std::ofstream out(path);
  out << metrics::to_json(m).dump(2) << '\n';
}

}  // namespace

TestEvaluation evaluate_test(const pipeline::ModelParams& params, const std::vector<data::TimeSeriesWindow>& test,
                             std::size_t eval_samples, std::uint64_t seed) {
  if (test.empty()) throw std::invalid_argument("empty test split");
  TestEvaluation ev;
  ev.predictions.resize(test.size());
  const auto eval_seed = pipeline::eval_stream_seed(seed);
  const long n = static_cast<long>(test.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    ev.predictions[k] = pipeline::predict(params, test[k], eval_samples, eval_seed, k);
  }
  std::vector<double> y, yhat;
  for (std::size_t k = 0; k < test.size(); ++k) {
    const auto t = test[k].y_future.values();
    const auto p = ev.predictions[k].y_d.values();
    y.insert(y.end(), t.begin(), t.end());
    yhat.insert(yhat.end(), p.begin(), p.end());
  }
  ev.mse = metrics::mse(y, yhat);
  ev.mae = metrics::mae(y, yhat);
  return ev;
}

data::PreparedData prepare_data(const config::ExperimentConfig& cfg, std::size_t tau) {
  data::WindowConfig wc{cfg.kappa, tau, cfg.stride};
  return data::prepare(config::load_dataset(cfg.dataset, wc), wc, cfg.per_series);
}

std::string run_name(pipeline::Variant v, std::size_t tau, std::uint64_t seed) {
  return std::string(pipeline::to_string(v)) + "_tau" + std::to_string(tau) + "_seed" + std::to_string(seed);
}

metrics::RunMetrics run_single(const config::ExperimentConfig& cfg, pipeline::Variant v, std::size_t tau,
                               std::uint64_t seed, const data::PreparedData& data, const fs::path& run_dir) {
  metrics::RunMetrics m;
  m.variant = v;
  m.tau = tau;
  m.seed = seed;
  m.config_hash = cfg.hash();
  fs::create_directories(run_dir);
  try {
    const auto tc = cfg.train_config(v, tau, seed);
    auto result = pipeline::train(tc, data.split);
    write_history(run_dir / "history.csv", result.history);
    checkpoint::write(run_dir / "checkpoint.txt",
                      checkpoint::from_model(result.best_params, {{"tau", std::to_string(tau)},
                                                                  {"seed", std::to_string(seed)},
                                                                  {"config_hash", m.config_hash}}));
    const auto ev = evaluate_test(result.best_params, data.split.test, cfg.eval_samples, seed);
    write_predictions(run_dir / "predictions.csv", data.split.test, ev.predictions, tau);
    m.ok = true;
    m.mse = ev.mse;
    m.mae = ev.mae;
    m.incidents = result.incidents;
    m.best_epoch = result.best_epoch;
  } catch (const std::exception& e) {
    m.ok = false;
    m.error = e.what();
  }
  write_metrics(run_dir / "metrics.json", m);
  return m;
}

std::vector<metrics::MetricReport> run_experiment(const config::ExperimentConfig& cfg, const fs::path& out) {
  cfg.validate();
  fs::create_directories(out / "runs");
  {
    std::ofstream c(out / "config.json");
    c << cfg.to_json().dump(2) << '\n';
  }
  std::vector<metrics::RunMetrics> runs;
  for (auto tau : cfg.taus) {
    const auto data = prepare_data(cfg, tau);
    for (auto v : cfg.variants)
      for (auto seed : cfg.seeds) {
        auto m = run_single(cfg, v, tau, seed, data, out / "runs" / run_name(v, tau, seed));
        if (!m.ok) std::cerr << "run " << run_name(v, tau, seed) << " failed: " << m.error << '\n';
        runs.push_back(std::move(m));
      }
  }
  auto rows = metrics::aggregate(runs);
  metrics::write_report_csv(out / "report.csv", rows);
  return rows;
}

std::vector<metrics::RunMetrics> collect_runs(const fs::path& out) {
  const auto dir = out / "runs";
  if (!fs::is_directory(dir)) throw std::runtime_error("no runs directory under " + out.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (fs::is_regular_file(e.path() / "metrics.json")) files.push_back(e.path() / "metrics.json");
  std::sort(files.begin(), files.end());
  std::vector<metrics::RunMetrics> runs;
  for (const auto& f : files) {
    std::ifstream in(f);
    try {
      runs.push_back(metrics::run_metrics_from_json(nlohmann::json::parse(in)));
    } catch (const std::exception& e) {
      throw std::runtime_error(f.string() + ": " + e.what());
    }
  }
  return runs;
}

std::vector<metrics::MetricReport> regenerate_report(const fs::path& out) {
  auto rows = metrics::aggregate(collect_runs(out));
  metrics::write_report_csv(out / "report.csv", rows);
  return rows;
}

}  // namespace blurcast::experiment
