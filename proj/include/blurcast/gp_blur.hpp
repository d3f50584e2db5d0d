#pragma once

// Gaussian-process blur model and its variational training objective.
//
// The blur covariance is an RBF kernel over normalized horizon positions
// t_i = i / (tau - 1) plus white noise sigma^2. A blurred forecast is
// Y_B = Y_F + chol(K + sigma^2 I) eps, which keeps Y_B differentiable in
// both Y_F and the kernel hyperparameters.
//
// svgp_elbo() is the sparse variational bound (non-whitened, M inducing
// locations) for a zero-mean GP on the residual Y - Y_F.

#include <cstddef>
#include <optional>
#include <string>

#include "blurcast/rng.hpp"
#include "blurcast/tape.hpp"
#include "blurcast/tensor.hpp"

namespace blurcast::gp {

inline constexpr double kInducingJitter = 1e-8;

template <class T>
struct GpBlurWeights {
  T log_lengthscale;       // scalar, lengthscale = exp
  T log_signal_var;        // scalar, s^2 = exp
  T log_noise_var;         // scalar, sigma^2 = exp
  T inducing_inputs;       // [M]
  T variational_mean;      // [M]
  T variational_chol_raw;  // [M x M], strict lower part as-is, diagonal through exp
};

template <class W, class F>
void visit(W& w, F&& f) {
  f(std::string("log_lengthscale"), w.log_lengthscale);
  f(std::string("log_signal_var"), w.log_signal_var);
  f(std::string("log_noise_var"), w.log_noise_var);
  f(std::string("inducing_inputs"), w.inducing_inputs);
  f(std::string("variational_mean"), w.variational_mean);
  f(std::string("variational_chol_raw"), w.variational_chol_raw);
}

struct GpBlurInit {
  double lengthscale = 0.2;
  double signal_var = 0.1;
  double noise_var = 0.01;
};

struct GpBlurParams {
  GpBlurWeights<Tensor> weights;

  double lengthscale() const;
  double signal_var() const;
  double noise_var() const;
  std::size_t inducing_count() const { return weights.inducing_inputs.numel(); }
};

/// M inducing inputs on a uniform grid over [0, 1] (M <= tau required),
/// q(u) initialized to the prior N(0, K_MM).
GpBlurParams init_gp(std::size_t inducing, std::size_t tau, const GpBlurInit& init = {});

/// Builds the variational_chol_raw entry that reproduces a given lower
/// Cholesky factor (diagonal > 0).
Tensor chol_to_raw(const Tensor& lower);

GpBlurWeights<Var> bind(Tape& tape, const GpBlurWeights<Tensor>& w, bool trainable = true);

/// t_i = i / (tau - 1); a single step maps to 0.
Tensor horizon_grid(std::size_t tau);

/// K[i, j] = s^2 exp(-(a_i - b_j)^2 / (2 l^2)) for a [n], b [m].
Var rbf_kernel(Var a, Var b, Var log_lengthscale, Var log_signal_var);
Tensor rbf_kernel(const Tensor& a, const Tensor& b, double lengthscale, double signal_var);

struct BlurSample {
  Var y_blurred;  // [tau x 1]
  Tensor epsilon;  // [tau x 1]
  std::optional<Var> chol_cov;  // chol(K + sigma^2 I), GP blur only
};

/// Y_B = Y_F + scale * chol(K + sigma^2 I) eps with eps drawn from rng.
/// scale = 0 pins the blur to the identity.
BlurSample blur_sample(Var y_f, const GpBlurWeights<Var>& psi, Rng& rng, double scale = 1.0);
/// Same with a caller-supplied eps.
BlurSample blur_with_noise(Var y_f, const GpBlurWeights<Var>& psi, const Tensor& epsilon, double scale = 1.0);

/// Y_B = Y_F + scale * sqrt(v) eps, with v = exp(log_variance), i.i.d. eps.
BlurSample isotropic_sample(Var y_f, Var log_variance, Rng& rng, double scale = 1.0);
BlurSample isotropic_with_noise(Var y_f, Var log_variance, const Tensor& epsilon, double scale = 1.0);

/// Evidence lower bound on log N(y_true - y_f | 0, K + sigma^2 I); larger
/// is better. y_true and y_f are [tau x 1].
Var svgp_elbo(Var y_true, Var y_f, const GpBlurWeights<Var>& psi);
/// Exact log marginal likelihood, dense O(tau^3). Test oracle.
Var exact_log_marginal(Var y_true, Var y_f, const GpBlurWeights<Var>& psi);
/// log N(y_true - y_f | 0, v I): the isotropic variant's likelihood term.
Var isotropic_log_likelihood(Var y_true, Var y_f, Var log_variance);

double svgp_elbo(const Tensor& y_true, const Tensor& y_f, const GpBlurParams& psi);
double exact_log_marginal(const Tensor& y_true, const Tensor& y_f, const GpBlurParams& psi);

}  // namespace blurcast::gp
