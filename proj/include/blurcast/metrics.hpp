#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "blurcast/pipeline.hpp"

namespace blurcast::metrics {

double mse(std::span<const double> y_true, std::span<const double> y_pred);
double mae(std::span<const double> y_true, std::span<const double> y_pred);

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};
/// Sample standard deviation over sqrt(n); zero for a single value.
MeanStderr mean_stderr(std::span<const double> xs);

/// Outcome of one (variant, tau, seed) run.
struct RunMetrics {
  pipeline::Variant variant = pipeline::Variant::DG;
  std::size_t tau = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double mse = 0.0;
  double mae = 0.0;
  std::size_t incidents = 0;
  std::size_t best_epoch = 0;
  std::string config_hash;
};

nlohmann::json to_json(const RunMetrics& r);
RunMetrics run_metrics_from_json(const nlohmann::json& j);

struct MetricReport {
  pipeline::Variant variant = pipeline::Variant::DG;
  std::size_t tau = 0;
  std::size_t seeds = 0;  // completed seeds
  double mse_mean = 0.0, mse_stderr = 0.0;
  double mae_mean = 0.0, mae_stderr = 0.0;
  std::string config_hash;
  std::vector<std::uint64_t> seed_list;  // completed seeds, ascending
  bool complete = true;                  // false if any seed failed
};

/// Groups by (variant, tau); rows sorted by variant order then tau.
std::vector<MetricReport> aggregate(const std::vector<RunMetrics>& runs);

void write_report_csv(const std::filesystem::path& path, const std::vector<MetricReport>& rows);

}  // namespace blurcast::metrics
