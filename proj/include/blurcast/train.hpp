#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "blurcast/data.hpp"
#include "blurcast/pipeline.hpp"

namespace blurcast::pipeline {

struct TrainConfig {
  Variant variant = Variant::DG;
  ModelHyper hyper{};
  LossConfig loss{};
  std::size_t batch = 64;
  std::size_t epochs = 50;
  std::size_t warmup = 1000;
  std::uint64_t seed = 1;
  std::size_t eval_samples = 1;
  double clip_norm = 10.0;
  double blur_scale = 1.0;
  bool detach_blur_from_forecaster = false;
  /// One eps per epoch shared by every window instead of one per window pass.
  bool blur_per_epoch = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean compound loss over the epoch's windows
  double val_mse = 0.0;
  std::size_t incidents = 0;  // rejected batches
};

struct TrainResult {
  ModelParams final_params;
  ModelParams best_params;  // lowest validation MSE
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::size_t incidents = 0;
};

struct BatchGradient {
  double loss_sum = 0.0;
  std::size_t windows = 0;
  std::vector<double> grad;  // mean over windows, ModelParams::tensors() order
  bool ok = true;
  std::string error;
};

/// Seed of the blur stream for one training window pass.
std::uint64_t blur_stream_seed(const TrainConfig& cfg, std::size_t epoch, std::size_t window_index);
/// Seed of the evaluation stream.
std::uint64_t eval_stream_seed(std::uint64_t seed);

/// Loss and gradient averaged over train[indices]. Windows run in parallel,
/// one tape each; the reduction order is fixed, so the result does not
/// depend on the thread count.
BatchGradient batch_gradient(const ModelParams& params, const std::vector<data::TimeSeriesWindow>& train,
                             std::span<const std::size_t> indices, std::size_t epoch, const TrainConfig& cfg);
/// Serial reference for batch_gradient.
BatchGradient batch_gradient_reference(const ModelParams& params, const std::vector<data::TimeSeriesWindow>& train,
                                       std::span<const std::size_t> indices, std::size_t epoch,
                                       const TrainConfig& cfg);

/// Mean per-window MSE of eval-mode predictions.
double evaluate_mse(const ModelParams& params, const std::vector<data::TimeSeriesWindow>& windows,
                    std::size_t eval_samples, std::uint64_t eval_seed, const ForwardOptions& opts = {});

TrainResult train(const TrainConfig& cfg, const data::Split& split);

}  // namespace blurcast::pipeline
