#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "blurcast/data.hpp"
#include "blurcast/pipeline.hpp"
#include "blurcast/train.hpp"

namespace blurcast::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetSpec {
  std::string source = "synthetic";  // "synthetic" | "csv"
  // synthetic
  std::string kind = "sine-mix";
  std::size_t windows = 2000;  // per series
  std::size_t series = 1;
  double noise = 0.1;
  std::uint64_t seed = 0;
  // csv
  std::string path;
  std::string target = "value";
  std::string timestamp = "timestamp";
  std::string id_column;
};

/// JSON keys: variant|variants, kappa, tau|taus, stride, d_model, n_layers,
/// n_heads, ff_mult, M, lambda, batch, epochs, warmup, seeds, eval_samples,
/// per_series, detach_blur_from_forecaster, blur_per_epoch, clip_norm,
/// dataset {...}, out. Unknown keys are rejected.
struct ExperimentConfig {
  std::vector<pipeline::Variant> variants{pipeline::Variant::DG};
  std::size_t kappa = 48;
  std::vector<std::size_t> taus{12};
  std::size_t stride = 1;
  std::size_t d_model = 16;
  std::size_t n_layers = 1;
  std::size_t n_heads = 8;
  std::size_t ff_mult = 2;
  std::size_t inducing = 8;
  double lambda = 0.001;
  std::size_t batch = 64;
  std::size_t epochs = 50;
  std::size_t warmup = 1000;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t eval_samples = 1;
  bool per_series = true;
  bool detach_blur_from_forecaster = false;
  bool blur_per_epoch = false;
  double clip_norm = 10.0;
  DatasetSpec dataset{};
  std::string out = "runs";

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  /// FNV-1a of the canonical JSON without the output directory.
  std::string hash() const;
  pipeline::TrainConfig train_config(pipeline::Variant v, std::size_t tau, std::uint64_t seed) const;
};

ExperimentConfig load(const std::filesystem::path& path);

std::vector<data::RawSeries> load_dataset(const DatasetSpec& spec, const data::WindowConfig& window);

}  // namespace blurcast::config
