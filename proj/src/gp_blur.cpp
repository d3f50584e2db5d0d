#include "blurcast/gp_blur.hpp"

#include <cmath>
#include <numbers>

#include "blurcast/ops.hpp"

namespace blurcast::gp {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Tensor strict_lower_mask(std::size_t n) {
  Tensor m({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) m.at(i, j) = 1.0;
  return m;
}

Var scaled_identity(Tape& tape, std::size_t n, Var scalar) {
  return ad::mul(tape.constant(Tensor::identity(n)), scalar);
}

// L_q = strict_lower(raw) + diag(exp(diag(raw)))
Var variational_factor(Var raw) {
  const std::size_t m = raw.value().rows();
  Tape& tape = *raw.tape;
  return ad::add(ad::mul(raw, tape.constant(strict_lower_mask(m))), ad::diag_embed(ad::exp(ad::diag_part(raw))));
}

Var residual(Var y_true, Var y_f) {
  if (y_true.shape() != y_f.shape() || y_true.shape().size() != 2 || y_true.shape()[1] != 1)
    throw ShapeError("residual needs matching [tau x 1] inputs, got " + shape_str(y_true.shape()) + " and " +
                     shape_str(y_f.shape()));
  return ad::sub(y_true, y_f);
}

}  // namespace

double GpBlurParams::lengthscale() const { return std::exp(weights.log_lengthscale.item()); }
double GpBlurParams::signal_var() const { return std::exp(weights.log_signal_var.item()); }
double GpBlurParams::noise_var() const { return std::exp(weights.log_noise_var.item()); }

Tensor horizon_grid(std::size_t tau) {
  Tensor t({tau});
  if (tau > 1)
    for (std::size_t i = 0; i < tau; ++i) t[i] = static_cast<double>(i) / static_cast<double>(tau - 1);
  return t;
}

Tensor rbf_kernel(const Tensor& a, const Tensor& b, double lengthscale, double signal_var) {
  Tensor k({a.numel(), b.numel()});
  const double c = -0.5 / (lengthscale * lengthscale);
  for (std::size_t i = 0; i < a.numel(); ++i)
    for (std::size_t j = 0; j < b.numel(); ++j) {
      const double d = a[i] - b[j];
      k.at(i, j) = signal_var * std::exp(c * d * d);
    }
  return k;
}

Tensor chol_to_raw(const Tensor& lower) {
  Tensor raw({lower.rows(), lower.cols()});
  for (std::size_t i = 0; i < lower.rows(); ++i)
    for (std::size_t j = 0; j <= i; ++j) raw.at(i, j) = i == j ? std::log(lower.at(i, i)) : lower.at(i, j);
  return raw;
}

GpBlurParams init_gp(std::size_t inducing, std::size_t tau, const GpBlurInit& init) {
  if (inducing == 0 || inducing > tau)
    throw std::invalid_argument("inducing count must be in [1, tau], got " + std::to_string(inducing));
  GpBlurParams p;
  p.weights.log_lengthscale = Tensor::scalar(std::log(init.lengthscale));
  p.weights.log_signal_var = Tensor::scalar(std::log(init.signal_var));
  p.weights.log_noise_var = Tensor::scalar(std::log(init.noise_var));
  p.weights.inducing_inputs = horizon_grid(inducing);
  p.weights.variational_mean = Tensor({inducing});
  Tensor kmm = rbf_kernel(p.weights.inducing_inputs, p.weights.inducing_inputs, init.lengthscale, init.signal_var);
  for (std::size_t i = 0; i < inducing; ++i) kmm.at(i, i) += kInducingJitter;
  p.weights.variational_chol_raw = chol_to_raw(linalg::cholesky_lower(kmm));
  return p;
}

GpBlurWeights<Var> bind(Tape& tape, const GpBlurWeights<Tensor>& w, bool trainable) {
  GpBlurWeights<Var> out;
  std::vector<const Tensor*> src;
  visit(w, [&](const std::string&, const Tensor& t) { src.push_back(&t); });
  std::size_t i = 0;
  visit(out, [&](const std::string&, Var& v) {
    v = trainable ? tape.leaf(*src[i]) : tape.constant(*src[i]);
    ++i;
  });
  return out;
}

Var rbf_kernel(Var a, Var b, Var log_lengthscale, Var log_signal_var) {
  Tape& tape = *a.tape;
  const std::size_t n = a.value().numel(), m = b.value().numel();
  Var rows = ad::matmul(ad::reshape(a, {n, 1}), tape.constant(Tensor({1, m}, 1.0)));
  Var cols = ad::matmul(tape.constant(Tensor({n, 1}, 1.0)), ad::reshape(b, {1, m}));
  Var coef = ad::scale(ad::exp(ad::scale(log_lengthscale, -2.0)), -0.5);
  return ad::mul(ad::exp(ad::mul(ad::square(ad::sub(rows, cols)), coef)), ad::exp(log_signal_var));
}

BlurSample blur_with_noise(Var y_f, const GpBlurWeights<Var>& psi, const Tensor& epsilon, double scale) {
  Tape& tape = *y_f.tape;
  const std::size_t tau = y_f.value().rows();
  if (epsilon.numel() != tau) throw ShapeError("epsilon must have tau entries");
  Var t = tape.constant(horizon_grid(tau));
  Var cov = ad::add(rbf_kernel(t, t, psi.log_lengthscale, psi.log_signal_var),
                    scaled_identity(tape, tau, ad::exp(psi.log_noise_var)));
  Var chol = ad::cholesky(cov);
  Var noise = ad::matmul(chol, tape.constant(epsilon.reshaped({tau, 1})));
  if (scale != 1.0) noise = ad::scale(noise, scale);
  return BlurSample{ad::add(y_f, noise), epsilon.reshaped({tau, 1}), chol};
}

BlurSample blur_sample(Var y_f, const GpBlurWeights<Var>& psi, Rng& rng, double scale) {
  return blur_with_noise(y_f, psi, standard_normal({y_f.value().rows(), 1}, rng), scale);
}

BlurSample isotropic_with_noise(Var y_f, Var log_variance, const Tensor& epsilon, double scale) {
  Tape& tape = *y_f.tape;
  const std::size_t tau = y_f.value().rows();
  if (epsilon.numel() != tau) throw ShapeError("epsilon must have tau entries");
  Var noise = ad::mul(tape.constant(epsilon.reshaped({tau, 1})), ad::exp(ad::scale(log_variance, 0.5)));
  if (scale != 1.0) noise = ad::scale(noise, scale);
  return BlurSample{ad::add(y_f, noise), epsilon.reshaped({tau, 1}), std::nullopt};
}

BlurSample isotropic_sample(Var y_f, Var log_variance, Rng& rng, double scale) {
  return isotropic_with_noise(y_f, log_variance, standard_normal({y_f.value().rows(), 1}, rng), scale);
}

Var svgp_elbo(Var y_true, Var y_f, const GpBlurWeights<Var>& psi) {
  Tape& tape = *y_true.tape;
  Var r = residual(y_true, y_f);
  const std::size_t tau = r.value().rows();
  const std::size_t m = psi.inducing_inputs.value().numel();
  const double n = static_cast<double>(tau);

  Var t = tape.constant(horizon_grid(tau));
  Var z = psi.inducing_inputs;
  Var kmm = ad::add(rbf_kernel(z, z, psi.log_lengthscale, psi.log_signal_var),
                ad::scale(tape.constant(Tensor::identity(m)), kInducingJitter));
  Var kmn = rbf_kernel(z, t, psi.log_lengthscale, psi.log_signal_var);
  Var lk = ad::cholesky(kmm);
  Var b = ad::triangular_solve(lk, kmn);             // L_k^{-1} K_mn
  Var a_t = ad::triangular_solve(lk, b, true);       // K_mm^{-1} K_mn
  Var mean_col = ad::reshape(psi.variational_mean, {m, 1});
  Var mu = ad::matmul(ad::transpose(a_t), mean_col);  // [tau x 1]
  Var lq = variational_factor(psi.variational_chol_raw);
  Var c = ad::matmul(ad::transpose(lq), a_t);         // [M x tau]
  Var var_f = ad::add(ad::sub(ad::sum(ad::square(c), 0), ad::sum(ad::square(b), 0)), ad::exp(psi.log_signal_var));

  Var half_inv_noise = ad::scale(ad::exp(ad::neg(psi.log_noise_var)), 0.5);
  Var misfit = ad::add(ad::sum(ad::square(ad::sub(r, mu))), ad::sum(var_f));
  Var expected_ll =
      ad::add_scalar(ad::neg(ad::add(ad::scale(psi.log_noise_var, 0.5 * n), ad::mul(misfit, half_inv_noise))),
                     -0.5 * n * kLog2Pi);

  Var trace_term = ad::sum(ad::square(ad::triangular_solve(lk, lq)));
  Var maha = ad::sum(ad::square(ad::triangular_solve(lk, mean_col)));
  Var logdet_k = ad::scale(ad::sum(ad::log(ad::diag_part(lk))), 2.0);
  Var logdet_s = ad::scale(ad::sum(ad::diag_part(psi.variational_chol_raw)), 2.0);
  Var kl = ad::scale(ad::add_scalar(ad::sub(ad::add(ad::add(trace_term, maha), logdet_k), logdet_s),
                                    -static_cast<double>(m)),
                     0.5);
  return ad::sub(expected_ll, kl);
}

Var exact_log_marginal(Var y_true, Var y_f, const GpBlurWeights<Var>& psi) {
  Tape& tape = *y_true.tape;
  Var r = residual(y_true, y_f);
  const std::size_t tau = r.value().rows();
  Var t = tape.constant(horizon_grid(tau));
  Var cov = ad::add(rbf_kernel(t, t, psi.log_lengthscale, psi.log_signal_var),
                    scaled_identity(tape, tau, ad::exp(psi.log_noise_var)));
  Var l = ad::cholesky(cov);
  Var alpha = ad::triangular_solve(l, r);
  return ad::add_scalar(ad::neg(ad::add(ad::scale(ad::sum(ad::square(alpha)), 0.5), ad::sum(ad::log(ad::diag_part(l))))),
                        -0.5 * static_cast<double>(tau) * kLog2Pi);
}

Var isotropic_log_likelihood(Var y_true, Var y_f, Var log_variance) {
  Var r = residual(y_true, y_f);
  const double n = static_cast<double>(r.value().rows());
  Var quad = ad::mul(ad::sum(ad::square(r)), ad::scale(ad::exp(ad::neg(log_variance)), 0.5));
  return ad::add_scalar(ad::neg(ad::add(quad, ad::scale(log_variance, 0.5 * n))), -0.5 * n * kLog2Pi);
}

double svgp_elbo(const Tensor& y_true, const Tensor& y_f, const GpBlurParams& psi) {
  Tape tape(false);
  auto w = bind(tape, psi.weights, false);
  return svgp_elbo(tape.constant(y_true), tape.constant(y_f), w).value().item();
}

double exact_log_marginal(const Tensor& y_true, const Tensor& y_f, const GpBlurParams& psi) {
  Tape tape(false);
  auto w = bind(tape, psi.weights, false);
  return exact_log_marginal(tape.constant(y_true), tape.constant(y_f), w).value().item();
}

}  // namespace blurcast::gp
