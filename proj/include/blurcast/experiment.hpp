#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "blurcast/config.hpp"
#include "blurcast/data.hpp"
#include "blurcast/metrics.hpp"
#include "blurcast/pipeline.hpp"

namespace blurcast::experiment {

struct TestEvaluation {
  double mse = 0.0;
  double mae = 0.0;
  std::vector<pipeline::Prediction> predictions;  // one per test window
};

/// Normalized-space metrics over every test window and horizon step.
TestEvaluation evaluate_test(const pipeline::ModelParams& params, const std::vector<data::TimeSeriesWindow>& test,
                             std::size_t eval_samples, std::uint64_t seed);

data::PreparedData prepare_data(const config::ExperimentConfig& cfg, std::size_t tau);

std::string run_name(pipeline::Variant v, std::size_t tau, std::uint64_t seed);

/// Trains and evaluates one (variant, tau, seed) and writes
///   history.csv, predictions.csv, checkpoint.txt, metrics.json
/// into run_dir. Failures are caught and recorded in the metrics.
metrics::RunMetrics run_single(const config::ExperimentConfig& cfg, pipeline::Variant v, std::size_t tau,
                               std::uint64_t seed, const data::PreparedData& data,
                               const std::filesystem::path& run_dir);

/// Every configured (variant, tau, seed) under out/runs, then out/report.csv.
std::vector<metrics::MetricReport> run_experiment(const config::ExperimentConfig& cfg,
                                                  const std::filesystem::path& out);

/// Reads out/runs/*/metrics.json.
std::vector<metrics::RunMetrics> collect_runs(const std::filesystem::path& out);
/// Re-aggregates the run files and rewrites out/report.csv.
std::vector<metrics::MetricReport> regenerate_report(const std::filesystem::path& out);

}  // namespace blurcast::experiment
