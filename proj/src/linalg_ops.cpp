#include <cmath>

#include "blurcast/kernels.hpp"
#include "blurcast/ops.hpp"

namespace blurcast {

namespace linalg {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw ShapeError("matmul shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor c({a.rows(), b.cols()});
  kernels::matmul(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

Tensor cholesky_lower(const Tensor& a) {
  if (a.rank() != 2 || a.rows() != a.cols()) throw ShapeError("cholesky of non-square " + shape_str(a.shape()));
  const std::size_t n = a.rows();
  Tensor l({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    double d = a.at(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l.at(j, k) * l.at(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) throw NotPositiveDefinite(j, d);
    const double ljj = std::sqrt(d);
    l.at(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = 0.5 * (a.at(i, j) + a.at(j, i));
      for (std::size_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
      l.at(i, j) = s / ljj;
    }
  }
  return l;
}

namespace {

void check_solve(const Tensor& l, const Tensor& b) {
  if (l.rank() != 2 || l.rows() != l.cols()) throw ShapeError("triangular solve with non-square factor");
  if (b.rank() != 2 || b.rows() != l.rows())
    throw ShapeError("triangular solve shape mismatch " + shape_str(l.shape()) + " vs " + shape_str(b.shape()));
  for (std::size_t i = 0; i < l.rows(); ++i)
    if (l.at(i, i) == 0.0) throw DomainError("zero diagonal entry at " + std::to_string(i));
}

}  // namespace

Tensor solve_lower(const Tensor& l, const Tensor& b) {
  check_solve(l, b);
  const std::size_t n = l.rows(), m = b.cols();
  Tensor x = b;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      const double lik = l.at(i, k);
      if (lik == 0.0) continue;
      for (std::size_t c = 0; c < m; ++c) x.at(i, c) -= lik * x.at(k, c);
    }
    const double inv = 1.0 / l.at(i, i);
    for (std::size_t c = 0; c < m; ++c) x.at(i, c) *= inv;
  }
  return x;
}

Tensor solve_lower_transposed(const Tensor& l, const Tensor& b) {
  check_solve(l, b);
  const std::size_t n = l.rows(), m = b.cols();
  Tensor x = b;
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) {
      const double lki = l.at(k, i);
      if (lki == 0.0) continue;
      for (std::size_t c = 0; c < m; ++c) x.at(i, c) -= lki * x.at(k, c);
    }
    const double inv = 1.0 / l.at(i, i);
    for (std::size_t c = 0; c < m; ++c) x.at(i, c) *= inv;
  }
  return x;
}

}  // namespace linalg

namespace ad {

Var matmul(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("operands on different tapes");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
    throw ShapeError("matmul shape mismatch " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  kernels::matmul(av.data(), bv.data(), out.data(), m, k, n);
  const auto ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib},
                      [ia, ib, m, k, n](Tape& tp, std::size_t self) {
                        auto g = tp.grad_out(self);
                        // dA += G B^T ; dB += A^T G
                        if (auto ga = tp.grad_in(ia); !ga.empty())
                          kernels::matmul_nt_acc(g, tp.value(ib).data(), ga, m, n, k);
                        if (auto gb = tp.grad_in(ib); !gb.empty())
                          kernels::matmul_tn_acc(tp.value(ia).data(), g, gb, k, m, n);
                      },
                      "matmul");
}

Var cholesky(Var a) {
  Tensor l = linalg::cholesky_lower(a.value());
  const auto ia = a.id;
  return a.tape->push(std::move(l), {ia},
                      [ia](Tape& tp, std::size_t self) {
                        const Tensor& L = tp.value(self);
                        const std::size_t n = L.rows();
                        auto g = tp.grad_out(self);
                        // P = Phi(L^T Lbar): lower triangle with halved diagonal,
                        // Lbar restricted to its lower triangle.
                        Tensor lbar({n, n});
                        for (std::size_t i = 0; i < n; ++i)
                          for (std::size_t j = 0; j <= i; ++j) lbar.at(i, j) = g[i * n + j];
                        Tensor p({n, n});
                        for (std::size_t i = 0; i < n; ++i)
                          for (std::size_t j = 0; j <= i; ++j) {
                            double s = 0.0;
                            for (std::size_t k = i; k < n; ++k) s += L.at(k, i) * lbar.at(k, j);
                            p.at(i, j) = i == j ? 0.5 * s : s;
                          }
                        // S = L^{-T} P L^{-1};  Abar = (S + S^T) / 2
                        Tensor x = linalg::solve_lower_transposed(L, p);
                        Tensor s = linalg::solve_lower_transposed(L, x.transposed()).transposed();
                        auto ga = tp.grad_in(ia);
                        for (std::size_t i = 0; i < n; ++i)
                          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += 0.5 * (s.at(i, j) + s.at(j, i));
                      },
                      "cholesky");
}

Var triangular_solve(Var l, Var b, bool transpose) {
  if (l.tape != b.tape) throw std::invalid_argument("operands on different tapes");
  Tensor x = transpose ? linalg::solve_lower_transposed(l.value(), b.value())
                       : linalg::solve_lower(l.value(), b.value());
  const auto il = l.id, ib = b.id;
  return l.tape->push(std::move(x), {il, ib},
                      [il, ib, transpose](Tape& tp, std::size_t self) {
                        const Tensor& L = tp.value(il);
                        const Tensor& X = tp.value(self);
                        const std::size_t n = X.rows(), m = X.cols();
                        Tensor gx(X.shape(), std::vector<double>(tp.grad_out(self).begin(), tp.grad_out(self).end()));
                        // L X = B:   gB = L^{-T} gX, gL = -tril(gB X^T)
                        // L^T X = B: gB = L^{-1} gX, gL = -tril(X gB^T)
                        Tensor gb = transpose ? linalg::solve_lower(L, gx) : linalg::solve_lower_transposed(L, gx);
                        if (auto g = tp.grad_in(ib); !g.empty())
                          for (std::size_t i = 0; i < gb.numel(); ++i) g[i] += gb[i];
                        if (auto g = tp.grad_in(il); !g.empty()) {
                          const Tensor& left = transpose ? X : gb;
                          const Tensor& right = transpose ? gb : X;
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j <= i; ++j) {
                              double s = 0.0;
                              for (std::size_t c = 0; c < m; ++c) s += left.at(i, c) * right.at(j, c);
                              g[i * n + j] -= s;
                            }
                        }
                      },
                      "triangular_solve");
}

}  // namespace ad

}  // namespace blurcast
