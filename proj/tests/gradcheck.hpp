#pragma once

// Central finite-difference gradient checks for tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "blurcast/ops.hpp"
#include "blurcast/rng.hpp"
#include "blurcast/tape.hpp"

namespace blurcast::testing {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// |analytic - numeric| / max(|analytic|, |numeric|, floor), maximized over
// every entry of every input.
struct GradCheck {
  double max_rel = 0.0;
  std::size_t input = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

inline constexpr double kRelFloor = 1e-3;

// Non-scalar outputs are contracted with a fixed random weight tensor so
// every output entry contributes.
inline Var to_scalar(Tape& tape, Var y, std::uint64_t seed) {
  if (y.value().rank() == 0) return y;
  Rng rng(seed);
  return ad::sum(ad::mul(y, tape.constant(uniform(y.shape(), -1.0, 1.0, rng))));
}

inline double eval_scalar(const Builder& f, const std::vector<Tensor>& xs, std::uint64_t seed,
                          std::vector<Tensor>* grads) {
  Tape tape(grads != nullptr);
  std::vector<Var> vs;
  for (const auto& x : xs) vs.push_back(tape.leaf(x));
  Var y = to_scalar(tape, f(tape, vs), seed);
  if (grads) {
    tape.backward(y);
    for (const auto& v : vs) grads->push_back(tape.grad(v));
  }
  return y.value().item();
}

// Only entries listed in `subset[i]` are checked for input i (all when empty).
inline GradCheck gradcheck(const Builder& f, const std::vector<Tensor>& inputs, double h = 1e-5,
                           const std::vector<std::vector<std::size_t>>& subset = {},
                           std::uint64_t proj_seed = 0x5eed) {
  std::vector<Tensor> analytic;
  eval_scalar(f, inputs, proj_seed, &analytic);
  GradCheck worst;
  std::vector<Tensor> xs = inputs;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::vector<std::size_t> idx;
    if (i < subset.size() && !subset[i].empty()) {
      idx = subset[i];
    } else {
      for (std::size_t j = 0; j < xs[i].numel(); ++j) idx.push_back(j);
    }
    for (std::size_t j : idx) {
      const double x0 = xs[i][j];
      xs[i][j] = x0 + h;
      const double up = eval_scalar(f, xs, proj_seed, nullptr);
      xs[i][j] = x0 - h;
      const double down = eval_scalar(f, xs, proj_seed, nullptr);
      xs[i][j] = x0;
      const double num = (up - down) / (2.0 * h);
      const double an = analytic[i][j];
      const double rel = std::abs(an - num) / std::max({std::abs(an), std::abs(num), kRelFloor});
      if (rel > worst.max_rel) worst = {rel, i, j, an, num};
    }
  }
  return worst;
}

}  // namespace blurcast::testing
