#include "blurcast/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace blurcast::optim {

double noam_lr(std::size_t step, std::size_t d_model, std::size_t warmup) {
  if (step == 0) throw std::invalid_argument("learning-rate schedule starts at step 1");
  if (d_model == 0 || warmup == 0) throw std::invalid_argument("d_model and warmup must be positive");
  const double s = static_cast<double>(step);
  return std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(static_cast<double>(warmup), -1.5));
}

Adam::Adam(AdamConfig cfg, std::span<Tensor* const> params) : cfg_(cfg) {
  for (const Tensor* p : params) size_ += p->numel();
  m_.assign(size_, 0.0);
  v_.assign(size_, 0.0);
}

double Adam::learning_rate() const {
  return cfg_.fixed_lr ? *cfg_.fixed_lr : noam_lr(step_ + 1, cfg_.d_model, cfg_.warmup);
}

bool Adam::step(std::span<Tensor* const> params, std::span<const double> grads) {
  if (grads.size() != size_) throw ShapeError("gradient length does not match the parameter set");
  for (double g : grads)
    if (!std::isfinite(g)) return false;
  const double lr = learning_rate();
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  std::size_t k = 0;
  for (Tensor* p : params) {
    for (auto& w : p->data()) {
      const double g = grads[k];
      m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * g;
      v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * g * g;
      w -= lr * (m_[k] / bc1) / (std::sqrt(v_[k] / bc2) + cfg_.eps);
      ++k;
    }
  }
  return true;
}

double global_norm(std::span<const double> grads) {
  double s = 0.0;
  for (double g : grads) s += g * g;
  return std::sqrt(s);
}

double clip_global_norm(std::span<double> grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads) g *= f;
  }
  return norm;
}

}  // namespace blurcast::optim
