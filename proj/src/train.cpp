#include "blurcast/train.hpp"

#include <algorithm>
#include <iostream>
#include <limits>
#include <numeric>

#include "blurcast/kernels.hpp"
#include "blurcast/ops.hpp"
#include "blurcast/optimizer.hpp"

namespace blurcast::pipeline {

namespace {

constexpr std::uint64_t kBlurTag = 0xb1u;
constexpr std::uint64_t kEvalTag = 0xe7u;
constexpr std::uint64_t kShuffleTag = 0x5fu;

struct WindowResult {
  double loss = 0.0;
  std::vector<double> grad;
  bool ok = true;
  std::string error;
};

ForwardOptions forward_options(const TrainConfig& cfg) {
  ForwardOptions opts;
  opts.blur_scale = cfg.blur_scale;
  opts.detach_blur_from_forecaster = cfg.detach_blur_from_forecaster;
  opts.with_elbo = cfg.loss.lambda != 0.0;
  return opts;
}

WindowResult window_gradient(const ModelParams& params, const data::TimeSeriesWindow& window, std::uint64_t stream,
                             const TrainConfig& cfg, std::size_t n_params) {
  WindowResult r;
  try {
    Tape tape;
    auto bound = bind(tape, params, true);
    Rng rng(stream);
    auto out = compound_forward(params, bound, window, rng, Mode::Train, forward_options(cfg));
    Var loss = compound_loss(params.variant, out, tape.constant(window.y_future), cfg.loss);
    tape.backward(loss);
    r.loss = loss.value().item();
    r.grad.resize(n_params, 0.0);
    std::size_t k = 0;
    for (const Var& leaf : bound.leaves) {
      const auto g = tape.grad_view(leaf);
      const auto n = leaf.value().numel();
      if (!g.empty()) std::copy(g.begin(), g.end(), r.grad.begin() + static_cast<long>(k));
      k += n;
    }
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

BatchGradient reduce(std::vector<WindowResult>& results, std::size_t n_params, bool reference) {
  BatchGradient b;
  b.windows = results.size();
  for (const auto& r : results)
    if (!r.ok) {
      b.ok = false;
      b.error = r.error;
      return b;
    }
  std::vector<std::span<const double>> parts;
  parts.reserve(results.size());
  for (const auto& r : results) {
    parts.emplace_back(r.grad);
    b.loss_sum += r.loss;
  }
  b.grad.assign(n_params, 0.0);
  if (reference)
    kernels::ordered_sum_reference(parts, b.grad);
  else
    kernels::ordered_sum(parts, b.grad);
  const double inv = 1.0 / static_cast<double>(results.size());
  for (auto& g : b.grad) g *= inv;
  return b;
}

}  // namespace

std::uint64_t blur_stream_seed(const TrainConfig& cfg, std::size_t epoch, std::size_t window_index) {
  if (cfg.blur_per_epoch) return derive_seed({cfg.seed, kBlurTag, epoch});
  return derive_seed({cfg.seed, kBlurTag, epoch, window_index});
}

std::uint64_t eval_stream_seed(std::uint64_t seed) { return derive_seed({seed, kEvalTag}); }

BatchGradient batch_gradient(const ModelParams& params, const std::vector<data::TimeSeriesWindow>& train,
                             std::span<const std::size_t> indices, std::size_t epoch, const TrainConfig& cfg) {
  const std::size_t n_params = params.size();
  std::vector<WindowResult> results(indices.size());
  const long n = static_cast<long>(indices.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto w = indices[static_cast<std::size_t>(i)];
    results[static_cast<std::size_t>(i)] =
        window_gradient(params, train[w], blur_stream_seed(cfg, epoch, w), cfg, n_params);
  }
  return reduce(results, n_params, false);
}

BatchGradient batch_gradient_reference(const ModelParams& params, const std::vector<data::TimeSeriesWindow>& train,
                                       std::span<const std::size_t> indices, std::size_t epoch,
                                       const TrainConfig& cfg) {
  const std::size_t n_params = params.size();
  std::vector<WindowResult> results;
  for (auto w : indices) results.push_back(window_gradient(params, train[w], blur_stream_seed(cfg, epoch, w), cfg, n_params));
  return reduce(results, n_params, true);
}

double evaluate_mse(const ModelParams& params, const std::vector<data::TimeSeriesWindow>& windows,
                    std::size_t eval_samples, std::uint64_t eval_seed, const ForwardOptions& opts) {
  if (windows.empty()) throw std::invalid_argument("no windows to evaluate");
  std::vector<double> per(windows.size());
  const long n = static_cast<long>(windows.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto pred = predict(params, windows[k], eval_samples, eval_seed, k, opts);
    const Tensor& y = windows[k].y_future;
    double s = 0.0;
    for (std::size_t j = 0; j < y.numel(); ++j) s += (y[j] - pred.y_d[j]) * (y[j] - pred.y_d[j]);
    per[k] = s / static_cast<double>(y.numel());
  }
  double total = 0.0;
  for (double v : per) total += v;
  return total / static_cast<double>(windows.size());
}

TrainResult train(const TrainConfig& cfg, const data::Split& split) {
  if (split.train.empty()) throw std::invalid_argument("empty training set");
  if (cfg.batch == 0 || cfg.epochs == 0) throw std::invalid_argument("batch and epochs must be >= 1");

  TrainResult result;
  result.final_params = init_model(cfg.variant, cfg.hyper, cfg.seed);
  ModelParams& params = result.final_params;
  auto tensors = params.tensors();
  optim::AdamConfig acfg;
  acfg.warmup = cfg.warmup;
  acfg.d_model = cfg.hyper.d_model;
  optim::Adam adam(acfg, tensors);

  ForwardOptions eval_opts;
  eval_opts.blur_scale = cfg.blur_scale;
  const auto eval_seed = eval_stream_seed(cfg.seed);

  result.best_params = params;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(split.train.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto shuffle_rng = make_rng({cfg.seed, kShuffleTag, epoch});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
      const std::size_t e = std::min(order.size(), b + cfg.batch);
      auto grad = batch_gradient(params, split.train, std::span(order).subspan(b, e - b), epoch, cfg);
      if (!grad.ok) {
        ++rec.incidents;
        std::cerr << "incident: epoch " << epoch << " batch " << b / cfg.batch << ": " << grad.error << '\n';
        continue;
      }
      optim::clip_global_norm(grad.grad, cfg.clip_norm);
      if (!adam.step(tensors, grad.grad)) {
        ++rec.incidents;
        std::cerr << "incident: epoch " << epoch << " batch " << b / cfg.batch << ": non-finite gradient\n";
        continue;
      }
      loss_sum += grad.loss_sum;
      seen += grad.windows;
    }
    rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : std::numeric_limits<double>::quiet_NaN();
    rec.val_mse = evaluate_mse(params, split.validation, cfg.eval_samples, eval_seed, eval_opts);
    result.incidents += rec.incidents;
    if (rec.val_mse < best_val) {
      best_val = rec.val_mse;
      result.best_params = params;
      result.best_epoch = epoch;
    }
    result.history.push_back(rec);
  }
  return result;
}

}  // namespace blurcast::pipeline
