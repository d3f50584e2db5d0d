#include "blurcast/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

namespace blurcast::kernels {

namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = std::size_t{1} << 16;

bool go_parallel(std::size_t work) { return work >= kParallelWork && !omp_in_parallel(); }

}  // namespace

namespace {

using v4d = double __attribute__((vector_size(32)));

inline v4d load4(const double* p) {
  v4d v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store4(double* p, v4d v) { std::memcpy(p, &v, sizeof v); }

// Rows [lo, hi) of c = (accumulate ? c : 0) + A b, where A(i, p) =
// pa[i * si + p * sp] and c has width 4 * NV. The NV accumulators stay in
// registers across the k loop; every entry is summed over p in ascending
// order.
template <std::size_t NV>
void rows_vec(const double* __restrict pa, const double* __restrict pb, double* __restrict pc, std::size_t lo,
              std::size_t hi, std::size_t k, std::size_t si, std::size_t sp, bool accumulate) {
  constexpr std::size_t n = 4 * NV;
  for (std::size_t i = lo; i < hi; ++i) {
    double* crow = pc + i * n;
    v4d acc[NV];
#pragma GCC unroll 8
    for (std::size_t v = 0; v < NV; ++v) acc[v] = accumulate ? load4(crow + 4 * v) : v4d{};
    for (std::size_t p = 0; p < k; ++p) {
      const double a = pa[i * si + p * sp];
      const double* brow = pb + p * n;
#pragma GCC unroll 8
      for (std::size_t v = 0; v < NV; ++v) acc[v] += a * load4(brow + 4 * v);
    }
#pragma GCC unroll 8
    for (std::size_t v = 0; v < NV; ++v) store4(crow + 4 * v, acc[v]);
  }
}

void rows_any(const double* __restrict pa, const double* __restrict pb, double* __restrict pc, std::size_t lo,
              std::size_t hi, std::size_t k, std::size_t n, std::size_t si, std::size_t sp, bool accumulate) {
  for (std::size_t i = lo; i < hi; ++i) {
    double* crow = pc + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double a = pa[i * si + p * sp];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

void rows(const double* pa, const double* pb, double* pc, std::size_t lo, std::size_t hi, std::size_t k,
          std::size_t n, std::size_t si, std::size_t sp, bool accumulate) {
  switch (n) {
    case 4: rows_vec<1>(pa, pb, pc, lo, hi, k, si, sp, accumulate); break;
    case 8: rows_vec<2>(pa, pb, pc, lo, hi, k, si, sp, accumulate); break;
    case 12: rows_vec<3>(pa, pb, pc, lo, hi, k, si, sp, accumulate); break;
    case 16: rows_vec<4>(pa, pb, pc, lo, hi, k, si, sp, accumulate); break;
    case 24: rows_vec<6>(pa, pb, pc, lo, hi, k, si, sp, accumulate); break;
    case 32: rows_vec<8>(pa, pb, pc, lo, hi, k, si, sp, accumulate); break;
    default: rows_any(pa, pb, pc, lo, hi, k, n, si, sp, accumulate);
  }
}

void matmul_rows(const double* pa, const double* pb, double* pc, std::size_t lo, std::size_t hi, std::size_t k,
                 std::size_t n, bool accumulate) {
  rows(pa, pb, pc, lo, hi, k, n, k, 1, accumulate);
}

void matmul_tn_rows(const double* pa, const double* pb, double* pc, std::size_t lo, std::size_t hi, std::size_t m,
                    std::size_t k, std::size_t n) {
  rows(pa, pb, pc, lo, hi, k, n, 1, m, true);
}

}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (!go_parallel(m * k * n)) {
    matmul_rows(a.data(), b.data(), c.data(), 0, m, k, n, accumulate);
    return;
  }
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    matmul_rows(a.data(), b.data(), c.data(), r, r + 1, k, n, accumulate);
  }
}

void matmul_reference(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  if (!go_parallel(m * k * n)) {
    matmul_tn_rows(a.data(), b.data(), c.data(), 0, m, m, k, n);
    return;
  }
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    matmul_tn_rows(a.data(), b.data(), c.data(), r, r + 1, m, k, n);
  }
}

void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  // b^T packed row-major so the inner loop runs over contiguous columns of c.
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  matmul(a, bt, c, m, k, n, true);
}

namespace {

inline void neumaier_column(const std::vector<std::span<const double>>& parts, std::size_t i,
                            double& out) {
  double sum = 0.0, comp = 0.0;
  for (const auto& part : parts) {
    const double x = part[i];
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  out = sum + comp;
}

}  // namespace

void ordered_sum(const std::vector<std::span<const double>>& parts, std::span<double> out) {
  const long n = static_cast<long>(out.size());
#pragma omp parallel for schedule(static) if (go_parallel(out.size() * parts.size()))
  for (long i = 0; i < n; ++i) neumaier_column(parts, static_cast<std::size_t>(i), out[i]);
}

void ordered_sum_reference(const std::vector<std::span<const double>>& parts,
                           std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) neumaier_column(parts, i, out[i]);
}

void apply_thread_cap_from_env() {
  if (const char* env = std::getenv("BLURCAST_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap > 0) omp_set_num_threads(cap);
    } catch (const std::exception&) {
      // malformed value: keep the OpenMP default
    }
  }
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace blurcast::kernels
