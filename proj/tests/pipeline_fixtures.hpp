#pragma once

#include <vector>

#include "blurcast/pipeline.hpp"
#include "blurcast/train.hpp"

namespace blurcast::testing {

inline data::TimeSeriesWindow random_window(std::size_t kappa, std::size_t tau, Rng& rng) {
  return {uniform({kappa, data::kCovariateDim + 1}, -1.0, 1.0, rng),
          uniform({tau, data::kCovariateDim}, -1.0, 1.0, rng), uniform({tau, 1}, -1.0, 1.0, rng), 0, 0};
}

inline pipeline::ModelHyper toy_hyper(std::size_t tau, std::size_t d_model, std::size_t inducing) {
  pipeline::ModelHyper h;
  h.tau = tau;
  h.d_model = d_model;
  h.n_heads = 2;
  h.n_layers = 1;
  h.inducing = inducing;
  return h;
}

// Replaces the zero-initialized heads of the second model so gradients reach
// every weight, as they would after some training.
inline void randomize_heads(pipeline::ModelParams& p, std::uint64_t seed) {
  Rng rng(seed);
  if (p.xi) {
    p.xi->weights.head_w = uniform(p.xi->weights.head_w.shape(), -0.5, 0.5, rng);
    p.xi->weights.head_b = uniform({1}, -0.5, 0.5, rng);
  }
}

// Rebuilds the bound model from leaves listed in ModelParams::tensors() order.
inline pipeline::BoundModel bind_from(const pipeline::ModelParams& p, const std::vector<Var>& leaves) {
  pipeline::BoundModel b;
  std::size_t i = 0;
  auto take = [&](const std::string&, Var& v) { v = leaves[i++]; };
  b.phi.encoder.resize(p.phi.weights.encoder.size());
  b.phi.decoder.resize(p.phi.weights.decoder.size());
  model::visit(b.phi, take);
  if (p.xi) {
    b.xi.emplace();
    b.xi->encoder.resize(p.xi->weights.encoder.size());
    b.xi->decoder.resize(p.xi->weights.decoder.size());
    model::visit(*b.xi, take);
  }
  if (p.psi) {
    b.psi.emplace();
    gp::visit(*b.psi, take);
  }
  if (p.isotropic_log_var) b.isotropic_log_var = leaves[i++];
  b.leaves = leaves;
  return b;
}

inline std::vector<Tensor> param_values(pipeline::ModelParams& p) {
  std::vector<Tensor> out;
  for (Tensor* t : p.tensors()) out.push_back(*t);
  return out;
}

// Train-mode compound loss of one window with a fixed blur stream.
inline Var compound_loss_of(const pipeline::ModelParams& p, const std::vector<Var>& leaves,
                            const data::TimeSeriesWindow& w, std::uint64_t stream, double lambda,
                            const pipeline::ForwardOptions& opts = {}) {
  Tape& tape = *leaves.front().tape;
  auto bound = bind_from(p, leaves);
  Rng rng(stream);
  auto out = pipeline::compound_forward(p, bound, w, rng, pipeline::Mode::Train, opts);
  return pipeline::compound_loss(p.variant, out, tape.constant(w.y_future), {lambda});
}

}  // namespace blurcast::testing
