#include <algorithm>
#include <cmath>
#include <memory>

#include "blurcast/ops.hpp"

namespace blurcast::ad {

namespace {

// Column block [rows x dh] at `off` of a row-major [rows x d] matrix,
// stored transposed as [dh x rows] so the inner loops run over rows.
void pack_t(const double* src, std::size_t rows, std::size_t d, std::size_t off, std::size_t dh, double* dst) {
  for (std::size_t j = 0; j < rows; ++j)
    for (std::size_t c = 0; c < dh; ++c) dst[c * rows + j] = src[j * d + off + c];
}

void unpack_t_add(const double* src, std::size_t rows, std::size_t d, std::size_t off, std::size_t dh, double* dst) {
  for (std::size_t j = 0; j < rows; ++j)
    for (std::size_t c = 0; c < dh; ++c) dst[j * d + off + c] += src[c * rows + j];
}

struct HeadArgs {
  std::size_t n, m, d, off;
  double inv_scale;
};

// One head, one query row: scores, softmax into prow, weighted values into orow.
// DH > 0 fixes the head width at compile time; DH == 0 reads it from dh.
template <std::size_t DH>
void forward_row(const double* __restrict qi, const double* __restrict kt, const double* __restrict vt,
                 double* __restrict prow, double* __restrict orow, std::size_t m, std::size_t dh,
                 double inv_scale) {
  if constexpr (DH > 0) {
    double q[DH];
    for (std::size_t c = 0; c < DH; ++c) q[c] = qi[c] * inv_scale;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < m; ++j) {
      double sc = 0.0;
      for (std::size_t c = 0; c < DH; ++c) sc += q[c] * kt[c * m + j];
      prow[j] = sc;
      mx = std::max(mx, sc);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += (prow[j] = std::exp(prow[j] - mx));
    const double iz = 1.0 / z;
    double acc[DH] = {};
    for (std::size_t j = 0; j < m; ++j) {
      const double p = prow[j] * iz;
      prow[j] = p;
      for (std::size_t c = 0; c < DH; ++c) acc[c] += p * vt[c * m + j];
    }
    for (std::size_t c = 0; c < DH; ++c) orow[c] = acc[c];
  } else {
    const std::size_t w = dh;
    for (std::size_t j = 0; j < m; ++j) prow[j] = 0.0;
    for (std::size_t c = 0; c < w; ++c) {
      const double qc = qi[c] * inv_scale;
      const double* kc = kt + c * m;
      for (std::size_t j = 0; j < m; ++j) prow[j] += qc * kc[j];
    }
    double mx = -INFINITY;
    for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, prow[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += (prow[j] = std::exp(prow[j] - mx));
    const double iz = 1.0 / z;
    for (std::size_t j = 0; j < m; ++j) prow[j] *= iz;
    for (std::size_t c = 0; c < w; ++c) {
      const double* vc = vt + c * m;
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += prow[j] * vc[j];
      orow[c] = acc;
    }
  }
}

// Gradients for one head, one query row. ds is scratch of length m.
template <std::size_t DH>
void backward_row(const double* __restrict prow, const double* __restrict gi, const double* __restrict qi,
                  const double* __restrict kt, const double* __restrict vt, double* __restrict gkt,
                  double* __restrict gvt, double* __restrict gq_row, double* __restrict ds, std::size_t m,
                  std::size_t dh, double inv_scale) {
  if constexpr (DH > 0) {
    // dP_ij = gO_i . V_j ; dV_j += P_ij gO_i
    double g[DH], q[DH], acc[DH] = {};
    for (std::size_t c = 0; c < DH; ++c) {
      g[c] = gi[c];
      q[c] = qi[c] * inv_scale;
    }
    double dot = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double p = prow[j];
      double dp = 0.0;
      for (std::size_t c = 0; c < DH; ++c) {
        dp += g[c] * vt[c * m + j];
        gvt[c * m + j] += p * g[c];
      }
      ds[j] = dp;
      dot += dp * p;
    }
    // softmax backward; the 1/sqrt(dh) scaling is folded into q and acc
    for (std::size_t j = 0; j < m; ++j) {
      const double sj = prow[j] * (ds[j] - dot);
      for (std::size_t c = 0; c < DH; ++c) {
        acc[c] += sj * kt[c * m + j];
        gkt[c * m + j] += sj * q[c];
      }
    }
    if (gq_row)
      for (std::size_t c = 0; c < DH; ++c) gq_row[c] += acc[c] * inv_scale;
  } else {
    const std::size_t w = dh;
    for (std::size_t j = 0; j < m; ++j) ds[j] = 0.0;
    for (std::size_t c = 0; c < w; ++c) {
      const double gc = gi[c];
      const double* vc = vt + c * m;
      double* gvc = gvt + c * m;
      for (std::size_t j = 0; j < m; ++j) {
        ds[j] += gc * vc[j];
        gvc[j] += prow[j] * gc;
      }
    }
    double dot = 0.0;
    for (std::size_t j = 0; j < m; ++j) dot += ds[j] * prow[j];
    for (std::size_t j = 0; j < m; ++j) ds[j] = prow[j] * (ds[j] - dot) * inv_scale;
    for (std::size_t c = 0; c < w; ++c) {
      const double* kc = kt + c * m;
      double* gkc = gkt + c * m;
      const double qc = qi[c];
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        acc += ds[j] * kc[j];
        gkc[j] += ds[j] * qc;
      }
      if (gq_row) gq_row[c] += acc;
    }
  }
}

template <class F>
void dispatch_width(std::size_t dh, F&& f) {
  switch (dh) {
    case 1: f(std::integral_constant<std::size_t, 1>{}); break;
    case 2: f(std::integral_constant<std::size_t, 2>{}); break;
    case 4: f(std::integral_constant<std::size_t, 4>{}); break;
    case 8: f(std::integral_constant<std::size_t, 8>{}); break;
    default: f(std::integral_constant<std::size_t, 0>{});
  }
}

}  // namespace

Var multi_head_attention(Var q, Var k, Var v, std::size_t heads) {
  if (q.tape != k.tape || q.tape != v.tape) throw std::invalid_argument("operands on different tapes");
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  const std::size_t n = qv.rows(), d = qv.cols(), m = kv.rows();
  if (kv.cols() != d || vv.rows() != m || vv.cols() != d)
    throw ShapeError("attention shape mismatch q" + shape_str(qv.shape()) + " k" + shape_str(kv.shape()) +
                     " v" + shape_str(vv.shape()));
  if (m == 0) throw ShapeError("attention over an empty key set");
  if (heads == 0 || d % heads != 0)
    throw ShapeError("model width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  const std::size_t dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs[h][i][j]
  auto probs = std::shared_ptr<double[]>(new double[heads * n * m]);
  Tensor out({n, d});
  const double* Q = qv.data().data();
  std::vector<double> kt(dh * m), vt(dh * m);
  dispatch_width(dh, [&](auto width) {
    constexpr std::size_t DH = decltype(width)::value;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      pack_t(kv.data().data(), m, d, off, dh, kt.data());
      pack_t(vv.data().data(), m, d, off, dh, vt.data());
      double* P = probs.get() + h * n * m;
      for (std::size_t i = 0; i < n; ++i)
        forward_row<DH>(Q + i * d + off, kt.data(), vt.data(), P + i * m, out.data().data() + i * d + off, m, dh,
                        inv_scale);
    }
  });

  const auto iq = q.id, ik = k.id, iv = v.id;
  return q.tape->push(
      std::move(out), {iq, ik, iv},
      [iq, ik, iv, n, m, d, heads, dh, inv_scale, probs](Tape& tp, std::size_t self) {
        auto g = tp.grad_out(self);
        const double* Q = tp.value(iq).data().data();
        const double* K = tp.value(ik).data().data();
        const double* V = tp.value(iv).data().data();
        auto gq = tp.grad_in(iq);
        auto gk = tp.grad_in(ik);
        auto gv = tp.grad_in(iv);
        std::vector<double> ds(m), kt(dh * m), vt(dh * m), gkt(dh * m), gvt(dh * m);
        dispatch_width(dh, [&](auto width) {
          constexpr std::size_t DH = decltype(width)::value;
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dh;
            pack_t(K, m, d, off, dh, kt.data());
            pack_t(V, m, d, off, dh, vt.data());
            std::fill(gkt.begin(), gkt.end(), 0.0);
            std::fill(gvt.begin(), gvt.end(), 0.0);
            const double* P = probs.get() + h * n * m;
            for (std::size_t i = 0; i < n; ++i)
              backward_row<DH>(P + i * m, g.data() + i * d + off, Q + i * d + off, kt.data(), vt.data(), gkt.data(),
                               gvt.data(), gq.empty() ? nullptr : gq.data() + i * d + off, ds.data(), m, dh,
                               inv_scale);
            if (!gk.empty()) unpack_t_add(gkt.data(), m, d, off, dh, gk.data());
            if (!gv.empty()) unpack_t_add(gvt.data(), m, d, off, dh, gv.data());
          }
        });
      },
      "multi_head_attention");
}

}  // namespace blurcast::ad
