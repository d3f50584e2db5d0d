#pragma once

// Dense inner loops used by the autodiff engine and the batch reducer.
//
// Every OpenMP kernel here has a plain serial counterpart with a
// `_reference` suffix. The references are the ground truth for the kernel
// tests and the baseline for bench/bench_kernels.cpp.

#include <cstddef>
#include <span>
#include <vector>

namespace blurcast::kernels {

// c = a[m x k] * b[k x n]; with accumulate=true, c += a*b.
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void matmul_reference(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// c += a^T * b, with a stored as [k x m] and b as [k x n].
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
// c += a * b^T, with a stored as [m x k] and b as [n x k].
void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);

/// Element-wise sum of `parts` in their given order with Neumaier
/// compensation. Output is independent of the thread count.
void ordered_sum(const std::vector<std::span<const double>>& parts, std::span<double> out);
void ordered_sum_reference(const std::vector<std::span<const double>>& parts, std::span<double> out);

/// Applies BLURCAST_THREADS (if set) as the OpenMP thread cap.
void apply_thread_cap_from_env();
int max_threads();

}  // namespace blurcast::kernels
