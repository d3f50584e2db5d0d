#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "blurcast/ops.hpp"

namespace blurcast::ad {

namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw std::invalid_argument("operands on different tapes");
  return *a.tape;
}

// Maps a flat index of the full (a-shaped) result to the flat index of the
// broadcast operand.
struct Broadcast {
  enum Kind { kSame, kScalar, kSuffix, kGeneral } kind = kSame;
  std::size_t b_numel = 0;
  std::vector<std::size_t> index;

  // f(i, j) for every flat index i of the result and its operand index j,
  // without per-element dispatch.
  template <class F>
  void for_each(std::size_t n, F&& f) const {
    switch (kind) {
      case kSame:
        for (std::size_t i = 0; i < n; ++i) f(i, i);
        break;
      case kScalar:
        for (std::size_t i = 0; i < n; ++i) f(i, std::size_t{0});
        break;
      case kSuffix:
        for (std::size_t base = 0; base < n; base += b_numel)
          for (std::size_t j = 0; j < b_numel; ++j) f(base + j, j);
        break;
      default:
        for (std::size_t i = 0; i < n; ++i) f(i, index[i]);
    }
  }
};

bool broadcastable(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) {
    for (std::size_t i = 0; i + a.size() < b.size(); ++i)
      if (b[i] != 1) return false;
  }
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto bd = b[b.size() - 1 - i];
    if (bd != 1 && bd != a[a.size() - 1 - i]) return false;
  }
  return true;
}

Broadcast make_broadcast(const Shape& a, const Shape& b) {
  Broadcast bc;
  bc.b_numel = shape_numel(b);
  if (a == b) return bc;
  if (!broadcastable(a, b))
    throw ShapeError("cannot broadcast " + shape_str(b) + " into " + shape_str(a));
  if (bc.b_numel == 1) {
    bc.kind = Broadcast::kScalar;
    return bc;
  }
  Shape trimmed(std::find_if(b.begin(), b.end(), [](auto d) { return d != 1; }), b.end());
  if (trimmed.size() <= a.size() && std::equal(trimmed.begin(), trimmed.end(), a.end() - trimmed.size())) {
    bc.kind = Broadcast::kSuffix;
    return bc;
  }
  bc.kind = Broadcast::kGeneral;
  const std::size_t na = shape_numel(a);
  bc.index.resize(na);
  // strides of b aligned to a's rank, zero on broadcast dims
  std::vector<std::size_t> bstride(a.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    const auto bd = b[b.size() - 1 - i];
    bstride[a.size() - 1 - i] = bd == 1 ? 0 : s;
    s *= bd;
  }
  std::vector<std::size_t> idx(a.size(), 0);
  for (std::size_t flat = 0; flat < na; ++flat) {
    std::size_t off = 0;
    for (std::size_t d = 0; d < a.size(); ++d) off += idx[d] * bstride[d];
    bc.index[flat] = off;
    for (std::size_t d = a.size(); d-- > 0;) {
      if (++idx[d] < a[d]) break;
      idx[d] = 0;
    }
  }
  return bc;
}

bool b_fits_a(const Shape& a, const Shape& b) {
  return shape_numel(a) >= shape_numel(b) && broadcastable(a, b);
}

template <class Fwd, class Ga, class Gb>
Var binary(Var a, Var b, const char* name, Fwd fwd, Ga grad_a, Gb grad_b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  auto bc = std::make_shared<Broadcast>(make_broadcast(av.shape(), bv.shape()));
  Tensor out(av.shape());
  {
    double* o = out.data().data();
    const double* x = av.data().data();
    const double* y = bv.data().data();
    bc->for_each(out.numel(), [&](std::size_t i, std::size_t j) { o[i] = fwd(x[i], y[j]); });
  }
  const auto ia = a.id, ib = b.id;
  return t.push(std::move(out), {ia, ib},
                [ia, ib, bc, grad_a, grad_b](Tape& tp, std::size_t self) {
                  auto g = tp.grad_out(self);
                  const double* x = tp.value(ia).data().data();
                  const double* y = tp.value(ib).data().data();
                  if (auto ga = tp.grad_in(ia); !ga.empty())
                    bc->for_each(g.size(), [&](std::size_t i, std::size_t j) { ga[i] += grad_a(g[i], x[i], y[j]); });
                  if (auto gb = tp.grad_in(ib); !gb.empty())
                    bc->for_each(g.size(), [&](std::size_t i, std::size_t j) { gb[j] += grad_b(g[i], x[i], y[j]); });
                },
                name);
}

template <class Fwd, class Grad>
Var unary(Var a, const char* name, Fwd fwd, Grad grad) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = fwd(av[i]);
  const auto ia = a.id;
  return t.push(std::move(out), {ia},
                [ia, grad](Tape& tp, std::size_t self) {
                  auto ga = tp.grad_in(ia);
                  auto g = tp.grad_out(self);
                  const Tensor& x = tp.value(ia);
                  const Tensor& y = tp.value(self);
                  for (std::size_t i = 0; i < g.size(); ++i) ga[i] += grad(g[i], x[i], y[i]);
                },
                name);
}

// Splits `shape` around `axis` into (outer, length, inner) extents.
void axis_extents(const Shape& shape, std::size_t axis, std::size_t& outer, std::size_t& len,
                  std::size_t& inner) {
  if (axis >= shape.size()) throw ShapeError("axis out of range for " + shape_str(shape));
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}

}  // namespace

Var add(Var a, Var b) {
  if (!b_fits_a(a.shape(), b.shape()) && b_fits_a(b.shape(), a.shape())) std::swap(a, b);
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Var sub(Var a, Var b) {
  if (!b_fits_a(a.shape(), b.shape()) && b_fits_a(b.shape(), a.shape())) return neg(sub(b, a));
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Var mul(Var a, Var b) {
  if (!b_fits_a(a.shape(), b.shape()) && b_fits_a(b.shape(), a.shape())) std::swap(a, b);
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; }, [](double g, double x, double) { return g * x; });
}

Var scale(Var a, double c) {
  return unary(
      a, "scale", [c](double x) { return c * x; }, [c](double g, double, double) { return c * g; });
}

Var add_scalar(Var a, double c) {
  return unary(
      a, "add_scalar", [c](double x) { return x + c; }, [](double g, double, double) { return g; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var exp(Var a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double g, double, double y) { return g * y; });
}

Var log(Var a) {
  for (double v : a.value().data())
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double g, double x, double) { return g / x; });
}

Var square(Var a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double g, double x, double) { return 2.0 * g * x; });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const auto ia = a.id;
  return t.push(Tensor::scalar(s), {ia},
                [ia](Tape& tp, std::size_t self) {
                  const double g = tp.grad_out(self)[0];
                  for (auto& x : tp.grad_in(ia)) x += g;
                },
                "sum");
}

Var mean(Var a) {
  const auto n = a.value().numel();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum(Var a, std::size_t axis) {
  Tape& t = *a.tape;
  const Shape& s = a.shape();
  std::size_t outer, len, inner;
  axis_extents(s, axis, outer, len, inner);
  Shape rs;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) rs.push_back(s[i]);
  Tensor out(rs);
  const Tensor& av = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += av[(o * len + l) * inner + i];
  const auto ia = a.id;
  return t.push(std::move(out), {ia},
                [ia, outer, len, inner](Tape& tp, std::size_t self) {
                  auto g = tp.grad_out(self);
                  auto ga = tp.grad_in(ia);
                  for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t l = 0; l < len; ++l)
                      for (std::size_t i = 0; i < inner; ++i) ga[(o * len + l) * inner + i] += g[o * inner + i];
                },
                "sum_axis");
}

Var softmax(Var a, std::size_t axis) {
  Tape& t = *a.tape;
  std::size_t outer, len, inner;
  axis_extents(a.shape(), axis, outer, len, inner);
  const Tensor& av = a.value();
  if (!av.all_finite()) throw NonFiniteError("softmax of non-finite input");
  Tensor out(av.shape());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      double mx = av[base];
      for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, av[base + l * inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < len; ++l) z += (out[base + l * inner] = std::exp(av[base + l * inner] - mx));
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= z;
    }
  const auto ia = a.id;
  return t.push(std::move(out), {ia},
                [ia, outer, len, inner](Tape& tp, std::size_t self) {
                  auto g = tp.grad_out(self);
                  auto ga = tp.grad_in(ia);
                  const Tensor& y = tp.value(self);
                  for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < inner; ++i) {
                      const std::size_t base = o * len * inner + i;
                      double dot = 0.0;
                      for (std::size_t l = 0; l < len; ++l) dot += g[base + l * inner] * y[base + l * inner];
                      for (std::size_t l = 0; l < len; ++l) {
                        const auto k = base + l * inner;
                        ga[k] += y[k] * (g[k] - dot);
                      }
                    }
                },
                "softmax");
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x, gain);
  tape_of(x, bias);
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw ShapeError("layer_norm of scalar");
  const std::size_t d = xv.shape().back();
  if (d < 2) throw ShapeError("layer_norm needs at least 2 features");
  if (gain.value().numel() != d || bias.value().numel() != d)
    throw ShapeError("layer_norm affine parameters must have " + std::to_string(d) + " entries");
  const std::size_t rows = xv.numel() / d;
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor out(xv.shape());
  auto xhat = std::make_shared<std::vector<double>>(xv.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = gv[j] * h + bv[j];
    }
  }
  const auto ix = x.id, ig = gain.id, ib = bias.id;
  return t.push(std::move(out), {ix, ig, ib},
                [ix, ig, ib, d, rows, xhat, inv_std](Tape& tp, std::size_t self) {
                  auto g = tp.grad_out(self);
                  const Tensor& gv = tp.value(ig);
                  auto gx = tp.grad_in(ix);
                  auto gg = tp.grad_in(ig);
                  auto gb = tp.grad_in(ib);
                  const auto& h = *xhat;
                  for (std::size_t r = 0; r < rows; ++r) {
                    const std::size_t off = r * d;
                    if (!gg.empty())
                      for (std::size_t j = 0; j < d; ++j) gg[j] += g[off + j] * h[off + j];
                    if (!gb.empty())
                      for (std::size_t j = 0; j < d; ++j) gb[j] += g[off + j];
                    if (gx.empty()) continue;
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dh = g[off + j] * gv[j];
                      m1 += dh;
                      m2 += dh * h[off + j];
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    const double is = (*inv_std)[r];
                    for (std::size_t j = 0; j < d; ++j)
                      gx[off + j] += is * (g[off + j] * gv[j] - m1 - h[off + j] * m2);
                  }
                },
                "layer_norm");
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const auto ia = a.id;
  return a.tape->push(std::move(out), {ia},
                      [ia](Tape& tp, std::size_t self) {
                        auto g = tp.grad_out(self);
                        auto ga = tp.grad_in(ia);
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                      },
                      "reshape");
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  const auto ia = a.id;
  return a.tape->push(av.transposed(), {ia},
                      [ia, r, c](Tape& tp, std::size_t self) {
                        auto g = tp.grad_out(self);
                        auto ga = tp.grad_in(ia);
                        for (std::size_t i = 0; i < r; ++i)
                          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
                      },
                      "transpose");
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.rows();
  if (bv.rows() != n)
    throw ShapeError("concat_cols row mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  const std::size_t ca = av.cols(), cb = bv.cols(), c = ca + cb;
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out.at(i, j) = av.at(i, j);
    for (std::size_t j = 0; j < cb; ++j) out.at(i, ca + j) = bv.at(i, j);
  }
  const auto ia = a.id, ib = b.id;
  return t.push(std::move(out), {ia, ib},
                [ia, ib, n, ca, cb, c](Tape& tp, std::size_t self) {
                  auto g = tp.grad_out(self);
                  if (auto ga = tp.grad_in(ia); !ga.empty())
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * c + j];
                  if (auto gb = tp.grad_in(ib); !gb.empty())
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * c + ca + j];
                },
                "concat_cols");
}

Var diag_part(Var a) {
  const Tensor& av = a.value();
  const std::size_t n = av.rows();
  if (av.cols() != n) throw ShapeError("diag_part of non-square " + shape_str(av.shape()));
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) out[i] = av.at(i, i);
  const auto ia = a.id;
  return a.tape->push(std::move(out), {ia},
                      [ia, n](Tape& tp, std::size_t self) {
                        auto g = tp.grad_out(self);
                        auto ga = tp.grad_in(ia);
                        for (std::size_t i = 0; i < n; ++i) ga[i * n + i] += g[i];
                      },
                      "diag_part");
}

Var diag_embed(Var v) {
  const Tensor& vv = v.value();
  if (vv.rank() != 1) throw ShapeError("diag_embed expects a vector");
  const std::size_t n = vv.numel();
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) out.at(i, i) = vv[i];
  const auto iv = v.id;
  return v.tape->push(std::move(out), {iv},
                      [iv, n](Tape& tp, std::size_t self) {
                        auto g = tp.grad_out(self);
                        auto gv = tp.grad_in(iv);
                        for (std::size_t i = 0; i < n; ++i) gv[i] += g[i * n + i];
                      },
                      "diag_embed");
}

Var detach(Var a) { return a.tape->constant(a.value()); }

}  // namespace blurcast::ad
