#include <doctest.h>

#include <omp.h>

#include <vector>

#include "blurcast/kernels.hpp"
#include "blurcast/rng.hpp"

using namespace blurcast;

namespace {

std::vector<double> rand_vec(std::size_t n, Rng& rng) { return uniform({n}, -1.0, 1.0, rng).values(); }

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  return worst;
}

std::vector<double> transpose(const std::vector<double>& a, std::size_t rows, std::size_t cols) {
  std::vector<double> t(a.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

struct Dims {
  std::size_t m, k, n;
};

// Small shapes take the serial path, large ones the OpenMP path.
const Dims kDims[] = {{1, 1, 1}, {3, 5, 2}, {17, 9, 33}, {64, 64, 64}, {96, 128, 80}, {257, 65, 31}};

}  // namespace

TEST_CASE("matmul agrees with the serial reference") {
  Rng rng(1);
  for (const auto& d : kDims) {
    const auto a = rand_vec(d.m * d.k, rng), b = rand_vec(d.k * d.n, rng);
    std::vector<double> c(d.m * d.n), ref(d.m * d.n);
    kernels::matmul(a, b, c, d.m, d.k, d.n);
    kernels::matmul_reference(a, b, ref, d.m, d.k, d.n);
    CHECK(max_rel_diff(c, ref) < 1e-12);

    const auto base = rand_vec(d.m * d.n, rng);
    c = base, ref = base;
    kernels::matmul(a, b, c, d.m, d.k, d.n, true);
    kernels::matmul_reference(a, b, ref, d.m, d.k, d.n, true);
    CHECK(max_rel_diff(c, ref) < 1e-12);
  }
}

TEST_CASE("transposed products agree with the reference") {
  Rng rng(2);
  for (const auto& d : kDims) {
    const auto base = rand_vec(d.m * d.n, rng);

    // c += a^T b with a stored [k x m]
    const auto at = rand_vec(d.k * d.m, rng), b = rand_vec(d.k * d.n, rng);
    std::vector<double> c = base, ref = base;
    kernels::matmul_tn_acc(at, b, c, d.m, d.k, d.n);
    kernels::matmul_reference(transpose(at, d.k, d.m), b, ref, d.m, d.k, d.n, true);
    CHECK(max_rel_diff(c, ref) < 1e-12);

    // c += a b^T with b stored [n x k]
    const auto a = rand_vec(d.m * d.k, rng), bt = rand_vec(d.n * d.k, rng);
    c = base, ref = base;
    kernels::matmul_nt_acc(a, bt, c, d.m, d.k, d.n);
    kernels::matmul_reference(a, transpose(bt, d.n, d.k), ref, d.m, d.k, d.n, true);
    CHECK(max_rel_diff(c, ref) < 1e-12);
  }
}

TEST_CASE("kernels give the same bits for any thread count") {
  Rng rng(3);
  const Dims d{257, 65, 31};
  const auto a = rand_vec(d.m * d.k, rng), b = rand_vec(d.k * d.n, rng);
  std::vector<std::vector<double>> parts;
  for (int i = 0; i < 40; ++i) parts.push_back(rand_vec(5000, rng));
  std::vector<std::span<const double>> views(parts.begin(), parts.end());

  const int saved = omp_get_max_threads();
  std::vector<double> c1(d.m * d.n), s1(5000);
  omp_set_num_threads(1);
  kernels::matmul(a, b, c1, d.m, d.k, d.n);
  kernels::ordered_sum(views, s1);
  for (int threads : {2, 3, 4}) {
    omp_set_num_threads(threads);
    std::vector<double> c(d.m * d.n), s(5000);
    kernels::matmul(a, b, c, d.m, d.k, d.n);
    kernels::ordered_sum(views, s);
    CHECK(c == c1);
    CHECK(s == s1);
  }
  omp_set_num_threads(saved);
}

TEST_CASE("ordered sum matches the reference bit for bit") {
  Rng rng(4);
  for (std::size_t n : {1u, 7u, 300u, 20000u}) {
    std::vector<std::vector<double>> parts;
    for (int i = 0; i < 13; ++i) parts.push_back(rand_vec(n, rng));
    std::vector<std::span<const double>> views(parts.begin(), parts.end());
    std::vector<double> out(n), ref(n);
    kernels::ordered_sum(views, out);
    kernels::ordered_sum_reference(views, ref);
    CHECK(out == ref);
  }
}

TEST_CASE("ordered sum compensates cancellation") {
  const std::vector<double> a{1e16}, b{1.0}, c{-1e16};
  std::vector<std::span<const double>> views{a, b, c};
  std::vector<double> out(1);
  kernels::ordered_sum(views, out);
  CHECK(out[0] == 1.0);
}
