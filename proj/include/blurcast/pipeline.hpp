#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "blurcast/data.hpp"
#include "blurcast/forecaster.hpp"
#include "blurcast/gp_blur.hpp"
#include "blurcast/rng.hpp"

namespace blurcast::pipeline {

/// FORECAST_ONLY: Y_F alone.   DG: GP blur then denoise.
/// DI: isotropic blur then denoise.   DWC: denoise Y_F directly.
/// RB: Y_F plus a second model's residual estimate.
/// DT: DG while training, DWC at evaluation.
enum class Variant { ForecastOnly, DG, DI, DWC, RB, DT };

inline constexpr std::array<Variant, 6> kAllVariants = {Variant::ForecastOnly, Variant::DG, Variant::DI,
                                                        Variant::DWC,          Variant::RB, Variant::DT};

std::string_view to_string(Variant v);
/// Accepts the tags above (case-insensitive).
Variant parse_variant(std::string_view tag);

bool uses_gp(Variant v);
bool uses_isotropic(Variant v);
bool uses_second_model(Variant v);

enum class Mode { Train, Eval };

struct ModelHyper {
  std::size_t d_model = 16;
  std::size_t n_layers = 1;
  std::size_t n_heads = 8;
  std::size_t ff_mult = 2;
  std::size_t tau = 12;
  std::size_t inducing = 8;
  gp::GpBlurInit gp_init{};
  /// Initial isotropic variance; matches the GP's initial marginal variance.
  double isotropic_init_var = 0.11;
};

/// phi: forecaster. xi: denoiser (DG, DI, DWC, DT) or residual model (RB).
/// psi: GP blur (DG, DT). isotropic_log_var: DI only.
struct ModelParams {
  Variant variant = Variant::ForecastOnly;
  model::ForecasterParams phi;
  std::optional<model::ForecasterParams> xi;
  std::optional<gp::GpBlurParams> psi;
  std::optional<Tensor> isotropic_log_var;

  /// Canonical order: phi, xi, psi, isotropic.
  std::vector<Tensor*> tensors();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::size_t size() const;
};

ModelParams init_model(Variant variant, const ModelHyper& hyper, std::uint64_t seed);

struct BoundModel {
  model::ForecasterWeights<Var> phi;
  std::optional<model::ForecasterWeights<Var>> xi;
  std::optional<gp::GpBlurWeights<Var>> psi;
  std::optional<Var> isotropic_log_var;
  std::vector<Var> leaves;  // same order as ModelParams::tensors()
};

BoundModel bind(Tape& tape, const ModelParams& params, bool trainable = true);

struct ForwardOptions {
  /// Multiplies the blur noise; 0 pins Y_B to Y_F.
  double blur_scale = 1.0;
  /// Feeds a stop-gradient copy of Y_F into the likelihood term.
  bool detach_blur_from_forecaster = false;
  /// Overrides the sampled eps (tests).
  std::optional<Tensor> fixed_epsilon;
  /// Compute the likelihood term in train mode.
  bool with_elbo = true;
};

struct PipelineOutput {
  Var y_f;
  std::optional<Var> y_b;
  Var y_d;
  std::optional<Var> residual;  // RB
  std::optional<Var> elbo;      // train mode, blur variants
};

PipelineOutput compound_forward(const ModelParams& params, const BoundModel& bound,
                                const data::TimeSeriesWindow& window, Rng& rng, Mode mode,
                                const ForwardOptions& opts = {});

struct LossConfig {
  double lambda = 0.001;
};

/// MSE(y_d, y) + lambda * (-elbo) for blur variants with an elbo;
/// MSE(y_f, y) + MSE(y_f + residual, y) for RB; MSE(y_d, y) otherwise.
Var compound_loss(Variant v, const PipelineOutput& out, Var y_true, const LossConfig& cfg);
double compound_loss(Variant v, const Tensor& y_f, const Tensor& y_d, const Tensor& y_true,
                     std::optional<double> elbo, const LossConfig& cfg);

struct Prediction {
  Tensor y_f;
  std::optional<Tensor> y_b;  // first evaluation sample
  Tensor y_d;
};

/// Eval-mode prediction. Blur variants (DG, DI) average `eval_samples`
/// blur-denoise passes drawn from the stream (eval_seed, window_index).
Prediction predict(const ModelParams& params, const data::TimeSeriesWindow& window, std::size_t eval_samples,
                   std::uint64_t eval_seed, std::size_t window_index, const ForwardOptions& opts = {});

}  // namespace blurcast::pipeline
