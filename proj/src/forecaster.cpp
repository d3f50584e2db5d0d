#include "blurcast/forecaster.hpp"

#include <cmath>

#include "blurcast/ops.hpp"
#include "blurcast/rng.hpp"

namespace blurcast::model {

void ForecasterHyper::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
    throw ShapeError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                     std::to_string(n_heads));
  if (n_layers == 0 || tau == 0 || ff_mult == 0) throw ShapeError("n_layers, tau and ff_mult must be >= 1");
}

std::size_t ForecasterParams::parameter_count() const {
  std::size_t n = 0;
  visit(weights, [&](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

namespace {

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return uniform(std::move(shape), -bound, bound, rng);
}

AttentionBlock<Tensor> init_attention(std::size_t d, Rng& rng) {
  AttentionBlock<Tensor> b;
  b.wq = init_uniform({d, d}, d, rng), b.bq = init_uniform({d}, d, rng);
  b.wk = init_uniform({d, d}, d, rng), b.bk = init_uniform({d}, d, rng);
  b.wv = init_uniform({d, d}, d, rng), b.bv = init_uniform({d}, d, rng);
  b.wo = init_uniform({d, d}, d, rng), b.bo = init_uniform({d}, d, rng);
  return b;
}

FeedForward<Tensor> init_ffn(std::size_t d, std::size_t hidden, Rng& rng) {
  FeedForward<Tensor> f;
  f.w1 = init_uniform({d, hidden}, d, rng), f.b1 = init_uniform({hidden}, d, rng);
  f.w2 = init_uniform({hidden, d}, hidden, rng), f.b2 = init_uniform({d}, hidden, rng);
  return f;
}

Var linear(Var x, Var w, Var b) { return ad::add(ad::matmul(x, w), b); }

Var attention(Var query_in, Var kv_in, const AttentionBlock<Var>& b, std::size_t heads) {
  Var q = linear(query_in, b.wq, b.bq);
  Var k = linear(kv_in, b.wk, b.bk);
  Var v = linear(kv_in, b.wv, b.bv);
  return linear(ad::multi_head_attention(q, k, v, heads), b.wo, b.bo);
}

Var feed_forward(Var x, const FeedForward<Var>& f) {
  return linear(ad::gelu(linear(x, f.w1, f.b1)), f.w2, f.b2);
}

Var encode(const ForecasterWeights<Var>& w, const ForecasterHyper& hyper, Var x_past) {
  Var h = linear(x_past, w.embed_w, w.embed_b);
  for (const auto& l : w.encoder) {
    h = ad::layer_norm(ad::add(h, attention(h, h, l.self_attn, hyper.n_heads)), l.norm1_gain, l.norm1_bias);
    h = ad::layer_norm(ad::add(h, feed_forward(h, l.ffn)), l.norm2_gain, l.norm2_bias);
  }
  return h;
}

Var decode(const ForecasterWeights<Var>& w, const ForecasterHyper& hyper, Var memory, Var dec_input) {
  Var q = ad::add(w.dec_query, linear(dec_input, w.dec_in_w, w.dec_in_b));
  for (const auto& l : w.decoder) {
    q = ad::layer_norm(ad::add(q, attention(q, q, l.self_attn, hyper.n_heads)), l.norm1_gain, l.norm1_bias);
    q = ad::layer_norm(ad::add(q, attention(q, memory, l.cross_attn, hyper.n_heads)), l.norm2_gain,
                       l.norm2_bias);
    q = ad::layer_norm(ad::add(q, feed_forward(q, l.ffn)), l.norm3_gain, l.norm3_bias);
  }
  return linear(q, w.head_w, w.head_b);
}

void check_inputs(const ForecasterHyper& hyper, Var x_past, Var cov_future) {
  const auto& xs = x_past.shape();
  const auto& cs = cov_future.shape();
  if (xs.size() != 2 || xs[1] != hyper.covariate_dim + 1)
    throw ShapeError("x_past must be [kappa x " + std::to_string(hyper.covariate_dim + 1) + "], got " +
                     shape_str(xs));
  if (cs.size() != 2 || cs[0] != hyper.tau || cs[1] != hyper.covariate_dim)
    throw ShapeError("cov_future must be [" + std::to_string(hyper.tau) + " x " +
                     std::to_string(hyper.covariate_dim) + "], got " + shape_str(cs));
}

}  // namespace

ForecasterParams init_params(const ForecasterHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  auto rng = make_rng({seed, 0xf0eca57ULL});
  const std::size_t d = hyper.d_model, hidden = d * hyper.ff_mult, in = hyper.covariate_dim + 1;
  ForecasterWeights<Tensor> w;
  w.embed_w = init_uniform({in, d}, in, rng);
  w.embed_b = init_uniform({d}, in, rng);
  for (std::size_t i = 0; i < hyper.n_layers; ++i) {
    EncoderLayer<Tensor> l;
    l.self_attn = init_attention(d, rng);
    l.norm1_gain = Tensor({d}, 1.0), l.norm1_bias = Tensor({d});
    l.ffn = init_ffn(d, hidden, rng);
    l.norm2_gain = Tensor({d}, 1.0), l.norm2_bias = Tensor({d});
    w.encoder.push_back(std::move(l));
  }
  w.dec_query = init_uniform({hyper.tau, d}, d, rng);
  const std::size_t din = hyper.decoder_input_dim();
  w.dec_in_w = init_uniform({din, d}, din, rng);
  w.dec_in_b = init_uniform({d}, din, rng);
  for (std::size_t i = 0; i < hyper.n_layers; ++i) {
    DecoderLayer<Tensor> l;
    l.self_attn = init_attention(d, rng);
    l.norm1_gain = Tensor({d}, 1.0), l.norm1_bias = Tensor({d});
    l.cross_attn = init_attention(d, rng);
    l.norm2_gain = Tensor({d}, 1.0), l.norm2_bias = Tensor({d});
    l.ffn = init_ffn(d, hidden, rng);
    l.norm3_gain = Tensor({d}, 1.0), l.norm3_bias = Tensor({d});
    w.decoder.push_back(std::move(l));
  }
  if (hyper.role == Role::Forecaster) {
    w.head_w = init_uniform({d, 1}, d, rng);
    w.head_b = init_uniform({1}, d, rng);
  } else {
    w.head_w = Tensor({d, 1});
    w.head_b = Tensor({1});
  }
  return ForecasterParams{hyper, std::move(w)};
}

ForecasterWeights<Var> bind(Tape& tape, const ForecasterWeights<Tensor>& w, bool trainable) {
  ForecasterWeights<Var> out;
  out.encoder.resize(w.encoder.size());
  out.decoder.resize(w.decoder.size());
  std::vector<const Tensor*> src;
  visit(w, [&](const std::string&, const Tensor& t) { src.push_back(&t); });
  std::size_t i = 0;
  visit(out, [&](const std::string&, Var& v) {
    v = trainable ? tape.leaf(*src[i]) : tape.constant(*src[i]);
    ++i;
  });
  return out;
}

Var forecast(const ForecasterWeights<Var>& w, const ForecasterHyper& hyper, Var x_past, Var cov_future) {
  check_inputs(hyper, x_past, cov_future);
  Var memory = encode(w, hyper, x_past);
  return decode(w, hyper, memory, cov_future);
}

Var denoise(const ForecasterWeights<Var>& w, const ForecasterHyper& hyper, Var x_past, Var cov_future,
            Var y_blurred) {
  check_inputs(hyper, x_past, cov_future);
  if (hyper.role != Role::Denoiser) throw std::invalid_argument("denoise() needs denoiser-role parameters");
  const auto& ys = y_blurred.shape();
  if (ys.size() != 2 || ys[0] != hyper.tau || ys[1] != 1)
    throw ShapeError("y_blurred must be [" + std::to_string(hyper.tau) + " x 1], got " + shape_str(ys));
  Var memory = encode(w, hyper, x_past);
  Var correction = decode(w, hyper, memory, ad::concat_cols(cov_future, y_blurred));
  return ad::add(y_blurred, correction);
}

Tensor forecast(const ForecasterParams& p, const data::TimeSeriesWindow& window) {
  Tape tape(false);
  auto w = bind(tape, p.weights, false);
  return forecast(w, p.hyper, tape.constant(window.x_past), tape.constant(window.cov_future)).value();
}

Tensor denoise(const ForecasterParams& p, const data::TimeSeriesWindow& window, const Tensor& y_blurred) {
  Tape tape(false);
  auto w = bind(tape, p.weights, false);
  return denoise(w, p.hyper, tape.constant(window.x_past), tape.constant(window.cov_future),
                 tape.constant(y_blurred))
      .value();
}

}  // namespace blurcast::model
