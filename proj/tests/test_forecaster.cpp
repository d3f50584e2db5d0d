#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "blurcast/forecaster.hpp"
#include "blurcast/ops.hpp"
#include "gradcheck.hpp"

using namespace blurcast;
using namespace blurcast::model;

namespace {

data::TimeSeriesWindow toy_window(std::size_t kappa, std::size_t tau, std::uint64_t seed) {
  Rng rng(seed);
  return {uniform({kappa, data::kCovariateDim + 1}, -1.0, 1.0, rng),
          uniform({tau, data::kCovariateDim}, -1.0, 1.0, rng), uniform({tau, 1}, -1.0, 1.0, rng), 0, 0};
}

ForecasterHyper small(std::size_t tau, Role role = Role::Forecaster) {
  ForecasterHyper h;
  h.d_model = 4;
  h.n_heads = 2;
  h.n_layers = 1;
  h.tau = tau;
  h.role = role;
  return h;
}

std::vector<Tensor> flatten(const ForecasterWeights<Tensor>& w) {
  std::vector<Tensor> out;
  visit(w, [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

ForecasterWeights<Var> unflatten(const ForecasterHyper& h, const std::vector<Var>& vs, std::size_t offset = 0) {
  ForecasterWeights<Var> w;
  w.encoder.resize(h.n_layers);
  w.decoder.resize(h.n_layers);
  std::size_t i = offset;
  visit(w, [&](const std::string&, Var& v) { v = vs[i++]; });
  return w;
}

// Stands in for trained weights: every head gets random values.
ForecasterParams randomized(ForecasterHyper h, std::uint64_t seed) {
  ForecasterParams p = init_params(h, seed);
  Rng rng(seed + 100);
  p.weights.head_w = uniform({h.d_model, 1}, -0.5, 0.5, rng);
  p.weights.head_b = uniform({1}, -0.5, 0.5, rng);
  visit(p.weights, [&](const std::string& name, Tensor& t) {
    if (name.find("norm") != std::string::npos)
      for (auto& v : t.data()) v += std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
  });
  return p;
}

void permute_heads(AttentionBlock<Tensor>& b, std::size_t heads, const std::vector<std::size_t>& perm) {
  const std::size_t d = b.wq.cols(), dh = d / heads;
  auto cols = [&](Tensor& t) {
    Tensor src = t;
    const std::size_t rows = t.rank() == 2 ? t.rows() : 1;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t j = 0; j < dh; ++j) t[r * d + h * dh + j] = src[r * d + perm[h] * dh + j];
  };
  cols(b.wq), cols(b.bq), cols(b.wk), cols(b.bk), cols(b.wv), cols(b.bv);
  Tensor wo = b.wo;
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t j = 0; j < dh; ++j)
      for (std::size_t c = 0; c < d; ++c) b.wo.at(h * dh + j, c) = wo.at(perm[h] * dh + j, c);
}

}  // namespace

TEST_CASE("init is deterministic per seed") {
  ForecasterHyper h;
  const auto a = init_params(h, 7), b = init_params(h, 7), c = init_params(h, 8);
  CHECK(flatten(a.weights) == flatten(b.weights));
  CHECK(flatten(a.weights) != flatten(c.weights));
  CHECK(a.parameter_count() == b.parameter_count());
  CHECK(a.parameter_count() > 0);
}

TEST_CASE("init uses a scaled uniform bound") {
  ForecasterHyper h;
  h.d_model = 32;
  h.n_heads = 8;
  h.n_layers = 2;
  const auto p = init_params(h, 1);
  const double bound = 1.0 / std::sqrt(32.0);
  for (double v : p.weights.encoder[1].self_attn.wq.values()) CHECK(std::abs(v) <= bound);
  CHECK(p.weights.encoder[0].norm1_gain == Tensor({32}, 1.0));
}

TEST_CASE("head count constraints") {
  ForecasterHyper h;
  h.d_model = 16;
  h.n_heads = 8;
  CHECK_NOTHROW(init_params(h, 1));
  CHECK(h.head_dim() == 2);
  h.d_model = 10;
  CHECK_THROWS_AS(init_params(h, 1), ShapeError);
}

TEST_CASE("forecast output shape and shape errors") {
  const auto w = toy_window(10, 6, 1);
  const auto p = init_params(small(6), 2);
  const Tensor y = forecast(p, w);
  CHECK(y.shape() == Shape{6, 1});
  CHECK(y.all_finite());
  auto bad = w;
  bad.cov_future = Tensor({5, data::kCovariateDim});
  CHECK_THROWS_AS(forecast(p, bad), ShapeError);
  bad = w;
  bad.x_past = Tensor({10, 3});
  CHECK_THROWS_AS(forecast(p, bad), ShapeError);
}

TEST_CASE("zero head projection outputs the head bias") {
  auto p = init_params(small(5), 3);
  p.weights.head_w = Tensor({4, 1});
  p.weights.head_b = Tensor::vector({0.37});
  const Tensor y = forecast(p, toy_window(8, 5, 4));
  for (double v : y.values()) CHECK(v == 0.37);
}

TEST_CASE("denoiser and residual models start with a zero head") {
  const auto d = init_params(small(5, Role::Denoiser), 3);
  CHECK(d.weights.head_w == Tensor({4, 1}));
  CHECK(d.weights.head_b == Tensor({1}));
  const auto w = toy_window(8, 5, 5);
  Rng rng(6);
  const Tensor yb = uniform({5, 1}, -2.0, 2.0, rng);
  CHECK(denoise(d, w, yb) == yb);
  CHECK(init_params(small(5, Role::Residual), 3).weights.head_w == Tensor({4, 1}));
  CHECK_THROWS_AS(denoise(init_params(small(5), 3), w, yb), std::invalid_argument);
}

TEST_CASE("forecast gradient matches finite differences on a 4-step toy") {
  const auto h = small(4);
  const auto p = randomized(h, 11);
  const auto w = toy_window(5, 4, 12);
  auto inputs = flatten(p.weights);
  const std::size_t n_weights = inputs.size();
  inputs.push_back(w.cov_future);
  const auto r = blurcast::testing::gradcheck(
      [&](Tape& tape, const std::vector<Var>& vs) {
        Var y = forecast(unflatten(h, vs), h, tape.constant(w.x_past), vs[n_weights]);
        return ad::mean(ad::square(ad::sub(y, tape.constant(w.y_future))));
      },
      inputs);
  INFO("input " << r.input << " entry " << r.index << " analytic " << r.analytic << " numeric " << r.numeric);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("denoiser gradient matches finite differences") {
  const auto h = small(4, Role::Denoiser);
  const auto p = randomized(h, 13);
  const auto w = toy_window(5, 4, 14);
  auto inputs = flatten(p.weights);
  const std::size_t n = inputs.size();
  Rng rng(15);
  inputs.push_back(uniform({4, 1}, -1.0, 1.0, rng));
  const auto r = blurcast::testing::gradcheck(
      [&](Tape& tape, const std::vector<Var>& vs) {
        Var y = denoise(unflatten(h, vs), h, tape.constant(w.x_past), tape.constant(w.cov_future), vs[n]);
        return ad::mean(ad::square(ad::sub(y, tape.constant(w.y_future))));
      },
      inputs);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("denoiser is continuous in the blurred input") {
  const auto h = small(6, Role::Denoiser);
  const auto p = randomized(h, 21);
  const auto w = toy_window(9, 6, 22);
  Rng rng(23);
  const Tensor yb = uniform({6, 1}, -1.0, 1.0, rng);
  const Tensor dir = uniform({6, 1}, -1.0, 1.0, rng);

  // J u from reverse mode, one output row at a time
  Tensor jvp({6, 1});
  for (std::size_t i = 0; i < 6; ++i) {
    Tape tape;
    auto wv = bind(tape, p.weights, false);
    Var y_in = tape.leaf(yb);
    Var out = denoise(wv, h, tape.constant(w.x_past), tape.constant(w.cov_future), y_in);
    Tensor pick({6, 1});
    pick[i] = 1.0;
    tape.backward(ad::sum(ad::mul(out, tape.constant(pick))));
    const Tensor g = tape.grad(y_in);
    for (std::size_t j = 0; j < 6; ++j) jvp[i] += g[j] * dir[j];
  }
  for (double delta : {1e-2, 1e-3, 1e-4}) {
    Tensor up = yb, down = yb;
    for (std::size_t j = 0; j < 6; ++j) up[j] += delta * dir[j], down[j] -= delta * dir[j];
    const Tensor yu = denoise(p, w, up), yd = denoise(p, w, down), y0 = denoise(p, w, yb);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(std::abs((yu[i] - yd[i]) / (2 * delta) - jvp[i]) < 1e-3 * std::max(1.0, std::abs(jvp[i])));
      CHECK(std::abs(yu[i] - y0[i]) < 10.0 * delta * std::max(1.0, std::abs(jvp[i])));
    }
  }
}

TEST_CASE("permuting attention heads leaves the forecast unchanged") {
  ForecasterHyper h;
  h.d_model = 16;
  h.n_heads = 4;
  h.n_layers = 2;
  h.tau = 6;
  const auto p = randomized(h, 31);
  const auto w = toy_window(12, 6, 32);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  auto q = p;
  for (auto& l : q.weights.encoder) permute_heads(l.self_attn, 4, perm);
  for (auto& l : q.weights.decoder) permute_heads(l.self_attn, 4, perm), permute_heads(l.cross_attn, 4, perm);
  CHECK(flatten(q.weights) != flatten(p.weights));
  CHECK(max_abs_diff(forecast(p, w), forecast(q, w)) < 1e-10);
}

TEST_CASE("forecast depends on future covariates") {
  const auto h = small(6);
  const auto p = randomized(h, 41);
  const auto w = toy_window(10, 6, 42);
  Tape tape;
  auto wv = bind(tape, p.weights, false);
  Var cov = tape.leaf(w.cov_future);
  tape.backward(ad::sum(forecast(wv, h, tape.constant(w.x_past), cov)));
  double norm = 0.0;
  const Tensor g_cov = tape.grad(cov);
  for (double g : g_cov.values()) norm += g * g;
  CHECK(norm > 1e-8);

  auto w2 = w;
  w2.cov_future[0] += 0.5;
  CHECK(forecast(p, w2) != forecast(p, w));
}
