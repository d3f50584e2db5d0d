#pragma once

// Attention encoder-decoder used for the initial forecaster, the denoiser,
// and the residual model of the boosting variant.
//
// Encoder: embed (covariates, target) per past step, then n_layers of
// post-norm self-attention + feed-forward blocks. Decoder: one learned
// query per horizon step plus an embedding of the future covariates (and,
// for the denoiser, the blurred forecast), then n_layers of self-attention,
// cross-attention into the encoder memory, and feed-forward. A linear head
// maps each horizon step to one value, so all tau steps come out of a
// single pass.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "blurcast/data.hpp"
#include "blurcast/tape.hpp"
#include "blurcast/tensor.hpp"

namespace blurcast::model {

enum class Role {
  Forecaster,  // y = head(decoder(queries + cov_future))
  Denoiser,    // y = y_blurred + head(decoder(queries + [cov_future, y_blurred])), zero head at init
  Residual,    // forecaster wiring, zero head at init
};

struct ForecasterHyper {
  std::size_t d_model = 16;
  std::size_t n_layers = 1;
  std::size_t n_heads = 8;
  std::size_t ff_mult = 2;
  std::size_t tau = 12;
  std::size_t covariate_dim = data::kCovariateDim;
  Role role = Role::Forecaster;

  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t decoder_input_dim() const { return covariate_dim + (role == Role::Denoiser ? 1 : 0); }
  /// Throws ShapeError when d_model is not divisible by n_heads.
  void validate() const;
};

template <class T>
struct AttentionBlock {
  T wq, bq, wk, bk, wv, bv, wo, bo;
};

template <class T>
struct FeedForward {
  T w1, b1, w2, b2;
};

template <class T>
struct EncoderLayer {
  AttentionBlock<T> self_attn;
  T norm1_gain, norm1_bias;
  FeedForward<T> ffn;
  T norm2_gain, norm2_bias;
};

template <class T>
struct DecoderLayer {
  AttentionBlock<T> self_attn;
  T norm1_gain, norm1_bias;
  AttentionBlock<T> cross_attn;
  T norm2_gain, norm2_bias;
  FeedForward<T> ffn;
  T norm3_gain, norm3_bias;
};

template <class T>
struct ForecasterWeights {
  T embed_w, embed_b;
  std::vector<EncoderLayer<T>> encoder;
  T dec_query;
  T dec_in_w, dec_in_b;
  std::vector<DecoderLayer<T>> decoder;
  T head_w, head_b;
};

namespace detail {

template <class B, class F>
void visit_attention(B& b, const std::string& p, F& f) {
  f(p + "wq", b.wq), f(p + "bq", b.bq), f(p + "wk", b.wk), f(p + "bk", b.bk);
  f(p + "wv", b.wv), f(p + "bv", b.bv), f(p + "wo", b.wo), f(p + "bo", b.bo);
}

template <class B, class F>
void visit_ffn(B& b, const std::string& p, F& f) {
  f(p + "w1", b.w1), f(p + "b1", b.b1), f(p + "w2", b.w2), f(p + "b2", b.b2);
}

}  // namespace detail

/// Calls f(name, member) for every tensor slot in a fixed canonical order.
/// Works for ForecasterWeights<Tensor> and ForecasterWeights<Var>, const or not.
template <class W, class F>
void visit(W& w, F&& f) {
  f(std::string("embed_w"), w.embed_w);
  f(std::string("embed_b"), w.embed_b);
  for (std::size_t i = 0; i < w.encoder.size(); ++i) {
    auto& l = w.encoder[i];
    const std::string p = "encoder." + std::to_string(i) + ".";
    detail::visit_attention(l.self_attn, p + "self_attn.", f);
    f(p + "norm1_gain", l.norm1_gain), f(p + "norm1_bias", l.norm1_bias);
    detail::visit_ffn(l.ffn, p + "ffn.", f);
    f(p + "norm2_gain", l.norm2_gain), f(p + "norm2_bias", l.norm2_bias);
  }
  f(std::string("dec_query"), w.dec_query);
  f(std::string("dec_in_w"), w.dec_in_w);
  f(std::string("dec_in_b"), w.dec_in_b);
  for (std::size_t i = 0; i < w.decoder.size(); ++i) {
    auto& l = w.decoder[i];
    const std::string p = "decoder." + std::to_string(i) + ".";
    detail::visit_attention(l.self_attn, p + "self_attn.", f);
    f(p + "norm1_gain", l.norm1_gain), f(p + "norm1_bias", l.norm1_bias);
    detail::visit_attention(l.cross_attn, p + "cross_attn.", f);
    f(p + "norm2_gain", l.norm2_gain), f(p + "norm2_bias", l.norm2_bias);
    detail::visit_ffn(l.ffn, p + "ffn.", f);
    f(p + "norm3_gain", l.norm3_gain), f(p + "norm3_bias", l.norm3_bias);
  }
  f(std::string("head_w"), w.head_w);
  f(std::string("head_b"), w.head_b);
}

struct ForecasterParams {
  ForecasterHyper hyper;
  ForecasterWeights<Tensor> weights;

  std::size_t parameter_count() const;
};

/// Scaled-uniform init, bound 1/sqrt(fan_in); layer-norm gains 1, biases 0.
/// Denoiser and Residual roles start with a zero head. Bit-identical per
/// (hyper, seed).
ForecasterParams init_params(const ForecasterHyper& hyper, std::uint64_t seed);

/// Puts every weight on the tape as a leaf (or a constant when
/// trainable=false) and returns the handles in the same structure.
ForecasterWeights<Var> bind(Tape& tape, const ForecasterWeights<Tensor>& w, bool trainable = true);

/// Y_F [tau x 1] from x_past [kappa x (d_x+1)] and cov_future [tau x d_x].
Var forecast(const ForecasterWeights<Var>& w, const ForecasterHyper& hyper, Var x_past, Var cov_future);

/// Y_D = Y_B + correction, with the decoder reading [cov_future, y_blurred]
/// and cross-attending to the encoding of x_past.
Var denoise(const ForecasterWeights<Var>& w, const ForecasterHyper& hyper, Var x_past, Var cov_future,
            Var y_blurred);

Tensor forecast(const ForecasterParams& p, const data::TimeSeriesWindow& window);
Tensor denoise(const ForecasterParams& p, const data::TimeSeriesWindow& window, const Tensor& y_blurred);

}  // namespace blurcast::model
