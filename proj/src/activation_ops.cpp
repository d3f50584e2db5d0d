// Built with -ffast-math so erf/exp vectorize through libmvec.

#include <cmath>

#include "blurcast/ops.hpp"

namespace blurcast::ad {

Var gelu(Var a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  const Tensor& av = a.value();
  const std::size_t n = av.numel();
  Tensor out(av.shape());
  {
    const double* __restrict x = av.data().data();
    double* __restrict y = out.data().data();
    for (std::size_t i = 0; i < n; ++i) y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * inv_sqrt2));
  }
  const auto ia = a.id;
  return a.tape->push(std::move(out), {ia},
                      [ia, n](Tape& tp, std::size_t self) {
                        auto ga = tp.grad_in(ia);
                        auto g = tp.grad_out(self);
                        const double* __restrict x = tp.value(ia).data().data();
                        const double* __restrict gp = g.data();
                        double* __restrict gx = ga.data();
                        for (std::size_t i = 0; i < n; ++i) {
                          const double cdf = 0.5 * (1.0 + std::erf(x[i] * inv_sqrt2));
                          const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
                          gx[i] += gp[i] * (cdf + x[i] * pdf);
                        }
                      },
                      "gelu");
}

}  // namespace blurcast::ad
