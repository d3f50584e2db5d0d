#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "blurcast/tensor.hpp"

namespace blurcast::optim {

/// lr = d_model^-0.5 * min(step^-0.5, step * warmup^-1.5). Throws on step 0.
double noam_lr(std::size_t step, std::size_t d_model, std::size_t warmup);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  std::size_t warmup = 1000;
  std::size_t d_model = 16;
  std::optional<double> fixed_lr;  // bypasses the warmup schedule when set
};

/// Bias-corrected Adam over a flat parameter vector. Gradients arrive
/// flattened in the order of the params list.
class Adam {
 public:
  Adam(AdamConfig cfg, std::span<Tensor* const> params);

  std::size_t step_count() const { return step_; }
  /// Learning rate the next step will use.
  double learning_rate() const;
  const AdamConfig& config() const { return cfg_; }

  /// Returns false and leaves everything untouched when `grads` holds a
  /// non-finite value.
  bool step(std::span<Tensor* const> params, std::span<const double> grads);

  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }

 private:
  AdamConfig cfg_;
  std::size_t step_ = 0;
  std::size_t size_ = 0;
  std::vector<double> m_, v_;
};

double global_norm(std::span<const double> grads);
/// Rescales grads so the L2 norm is at most max_norm; returns the norm
/// before clipping.
double clip_global_norm(std::span<double> grads, double max_norm);

}  // namespace blurcast::optim
