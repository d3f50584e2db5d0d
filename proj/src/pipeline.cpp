#include "blurcast/pipeline.hpp"

#include <algorithm>
#include <cctype>

#include "blurcast/ops.hpp"

namespace blurcast::pipeline {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::ForecastOnly: return "FORECAST_ONLY";
    case Variant::DG: return "DG";
    case Variant::DI: return "DI";
    case Variant::DWC: return "DWC";
    case Variant::RB: return "RB";
    case Variant::DT: return "DT";
  }
  return "?";
}

Variant parse_variant(std::string_view tag) {
  std::string up(tag);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  std::replace(up.begin(), up.end(), '-', '_');
  for (auto v : kAllVariants)
    if (to_string(v) == up) return v;
  throw std::invalid_argument("unknown variant '" + std::string(tag) + "'");
}

bool uses_gp(Variant v) { return v == Variant::DG || v == Variant::DT; }
bool uses_isotropic(Variant v) { return v == Variant::DI; }
bool uses_second_model(Variant v) { return v != Variant::ForecastOnly; }

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out;
  auto push = [&](const std::string&, Tensor& t) { out.push_back(&t); };
  model::visit(phi.weights, push);
  if (xi) model::visit(xi->weights, push);
  if (psi) gp::visit(psi->weights, push);
  if (isotropic_log_var) out.push_back(&*isotropic_log_var);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  auto push = [&](const std::string& prefix) {
    return [&out, prefix](const std::string& name, const Tensor& t) { out.emplace_back(prefix + name, &t); };
  };
  model::visit(phi.weights, push("phi."));
  if (xi) model::visit(xi->weights, push("xi."));
  if (psi) gp::visit(psi->weights, push("psi."));
  if (isotropic_log_var) out.emplace_back("iso.log_variance", &*isotropic_log_var);
  return out;
}

std::size_t ModelParams::size() const {
  std::size_t n = 0;
  for (const auto& [_, t] : named()) n += t->numel();
  return n;
}

ModelParams init_model(Variant variant, const ModelHyper& hyper, std::uint64_t seed) {
  model::ForecasterHyper fh;
  fh.d_model = hyper.d_model;
  fh.n_layers = hyper.n_layers;
  fh.n_heads = hyper.n_heads;
  fh.ff_mult = hyper.ff_mult;
  fh.tau = hyper.tau;
  ModelParams p;
  p.variant = variant;
  p.phi = model::init_params(fh, derive_seed({seed, 1}));
  if (uses_second_model(variant)) {
    auto xh = fh;
    xh.role = variant == Variant::RB ? model::Role::Residual : model::Role::Denoiser;
    p.xi = model::init_params(xh, derive_seed({seed, 2}));
  }
  if (uses_gp(variant)) p.psi = gp::init_gp(std::min(hyper.inducing, hyper.tau), hyper.tau, hyper.gp_init);
  if (uses_isotropic(variant)) p.isotropic_log_var = Tensor::scalar(std::log(hyper.isotropic_init_var));
  return p;
}

BoundModel bind(Tape& tape, const ModelParams& params, bool trainable) {
  BoundModel b;
  b.phi = model::bind(tape, params.phi.weights, trainable);
  auto collect = [&](const std::string&, const Var& v) { b.leaves.push_back(v); };
  model::visit(b.phi, collect);
  if (params.xi) {
    b.xi = model::bind(tape, params.xi->weights, trainable);
    model::visit(*b.xi, collect);
  }
  if (params.psi) {
    b.psi = gp::bind(tape, params.psi->weights, trainable);
    gp::visit(*b.psi, collect);
  }
  if (params.isotropic_log_var) {
    b.isotropic_log_var = trainable ? tape.leaf(*params.isotropic_log_var) : tape.constant(*params.isotropic_log_var);
    b.leaves.push_back(*b.isotropic_log_var);
  }
  return b;
}

namespace {

Tensor draw_epsilon(std::size_t tau, Rng& rng, const ForwardOptions& opts) {
  if (opts.fixed_epsilon) return opts.fixed_epsilon->reshaped({tau, 1});
  return standard_normal({tau, 1}, rng);
}

Var mse(Var a, Var b) { return ad::mean(ad::square(ad::sub(a, b))); }

double mse(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw ShapeError("mse length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return (1.0 / static_cast<double>(a.numel())) * s;
}

}  // namespace

PipelineOutput compound_forward(const ModelParams& params, const BoundModel& bound,
                                const data::TimeSeriesWindow& window, Rng& rng, Mode mode,
                                const ForwardOptions& opts) {
  const Variant v = params.variant;
  if (uses_second_model(v) && !(params.xi && bound.xi))
    throw std::invalid_argument(std::string(to_string(v)) + " needs a second parameter set");
  if (uses_gp(v) && !(params.psi && bound.psi))
    throw std::invalid_argument(std::string(to_string(v)) + " needs GP blur parameters");
  if (uses_isotropic(v) && !bound.isotropic_log_var)
    throw std::invalid_argument("DI needs an isotropic variance parameter");

  Tape& tape = *bound.phi.embed_w.tape;
  Var x_past = tape.constant(window.x_past);
  Var cov_future = tape.constant(window.cov_future);
  const std::size_t tau = params.phi.hyper.tau;

  PipelineOutput out;
  out.y_f = model::forecast(bound.phi, params.phi.hyper, x_past, cov_future);

  const bool blur_now = (v == Variant::DG || v == Variant::DI) || (v == Variant::DT && mode == Mode::Train);
  switch (v) {
    case Variant::ForecastOnly:
      out.y_d = out.y_f;
      break;
    case Variant::RB:
      out.residual = model::forecast(*bound.xi, params.xi->hyper, x_past, cov_future);
      out.y_d = ad::add(out.y_f, *out.residual);
      break;
    case Variant::DWC:
      out.y_d = model::denoise(*bound.xi, params.xi->hyper, x_past, cov_future, out.y_f);
      break;
    case Variant::DG:
    case Variant::DT:
    case Variant::DI: {
      if (!blur_now) {  // DT at evaluation
        out.y_d = model::denoise(*bound.xi, params.xi->hyper, x_past, cov_future, out.y_f);
        break;
      }
      const Tensor eps = draw_epsilon(tau, rng, opts);
      const auto sample = uses_gp(v) ? gp::blur_with_noise(out.y_f, *bound.psi, eps, opts.blur_scale)
                                     : gp::isotropic_with_noise(out.y_f, *bound.isotropic_log_var, eps,
                                                                opts.blur_scale);
      out.y_b = sample.y_blurred;
      out.y_d = model::denoise(*bound.xi, params.xi->hyper, x_past, cov_future, *out.y_b);
      if (mode == Mode::Train && opts.with_elbo) {
        Var y_true = tape.constant(window.y_future);
        Var y_f = opts.detach_blur_from_forecaster ? ad::detach(out.y_f) : out.y_f;
        out.elbo = uses_gp(v) ? gp::svgp_elbo(y_true, y_f, *bound.psi)
                              : gp::isotropic_log_likelihood(y_true, y_f, *bound.isotropic_log_var);
      }
      break;
    }
  }
  return out;
}

Var compound_loss(Variant v, const PipelineOutput& out, Var y_true, const LossConfig& cfg) {
  if (cfg.lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  if (v == Variant::RB) return ad::add(mse(out.y_f, y_true), mse(out.y_d, y_true));
  Var loss = mse(out.y_d, y_true);
  if (out.elbo && cfg.lambda != 0.0) loss = ad::add(loss, ad::scale(ad::neg(*out.elbo), cfg.lambda));
  return loss;
}

double compound_loss(Variant v, const Tensor& y_f, const Tensor& y_d, const Tensor& y_true,
                     std::optional<double> elbo, const LossConfig& cfg) {
  if (cfg.lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  if (v == Variant::RB) return mse(y_f, y_true) + mse(y_d, y_true);
  double loss = mse(y_d, y_true);
  if (elbo && cfg.lambda != 0.0) loss = loss + cfg.lambda * (-*elbo);
  return loss;
}

Prediction predict(const ModelParams& params, const data::TimeSeriesWindow& window, std::size_t eval_samples,
                   std::uint64_t eval_seed, std::size_t window_index, const ForwardOptions& opts) {
  if (eval_samples == 0) throw std::invalid_argument("eval_samples must be >= 1");
  const Variant v = params.variant;
  const bool stochastic = v == Variant::DG || v == Variant::DI;
  const std::size_t passes = stochastic ? eval_samples : 1;
  auto rng = make_rng({eval_seed, window_index});
  Prediction pred;
  for (std::size_t s = 0; s < passes; ++s) {
    Tape tape(false);
    auto bound = bind(tape, params, false);
    auto out = compound_forward(params, bound, window, rng, Mode::Eval, opts);
    if (s == 0) {
      pred.y_f = out.y_f.value();
      if (out.y_b) pred.y_b = out.y_b->value();
      pred.y_d = out.y_d.value();
    } else {
      const Tensor& yd = out.y_d.value();
      for (std::size_t i = 0; i < yd.numel(); ++i) pred.y_d[i] += yd[i];
    }
  }
  if (passes > 1)
    for (auto& x : pred.y_d.data()) x /= static_cast<double>(passes);
  return pred;
}

}  // namespace blurcast::pipeline
