// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace cud::kernels {

// Every parallel kernel here is bitwise identical to its *_serial reference
// for any thread count: each output element is owned by exactly one thread
// and reductions use a fixed block decomposition independent of threading.

void set_max_threads(int n);
int max_threads();

// c[m x n] = op_a(a) * op_b(b); transposed operands are stored untransposed
// (a is k x m when trans_a, b is n x k when trans_b).
void matmul(const double* a, bool trans_a, const double* b, bool trans_b,
            double* c, std::int64_t m, std::int64_t k, std::int64_t n);
void matmul_serial(const double* a, bool trans_a, const double* b, bool trans_b,
                   double* c, std::int64_t m, std::int64_t k, std::int64_t n);

// Fixed-block sum: partials over 1024-element blocks, then an ordered pass.
double reduce_sum(const double* x, std::int64_t n);
double reduce_sum_serial(const double* x, std::int64_t n);

// out[j] = sum_i x[i*n + j]
void col_sum(const double* x, std::int64_t m, std::int64_t n, double* out);
void col_sum_serial(const double* x, std::int64_t m, std::int64_t n, double* out);

// Per-row layer norm: y = (x - mean)/sqrt(var + eps) * gain + bias.
// xhat and inv_sd are saved for the backward pass.
void layer_norm(const double* x, const double* gain, const double* bias, double eps,
                std::int64_t rows, std::int64_t cols, double* y, double* xhat, double* inv_sd);
void layer_norm_serial(const double* x, const double* gain, const double* bias, double eps,
                       std::int64_t rows, std::int64_t cols, double* y, double* xhat, double* inv_sd);

namespace detail {
void parallel_ranges(std::int64_t n, void* ctx, void (*body)(void*, std::int64_t, std::int64_t));
}

// Applies f(i) for i in [0, n); f must only write to element i's outputs.
template <class F>
void apply(std::int64_t n, F&& f) {
    struct Ctx { F* f; } ctx{&f};
    detail::parallel_ranges(n, &ctx, [](void* c, std::int64_t lo, std::int64_t hi) {
        F& fn = *static_cast<Ctx*>(c)->f;
        for (std::int64_t i = lo; i < hi; ++i) fn(i);
    });
}

template <class F>
void apply_serial(std::int64_t n, F&& f) {
    for (std::int64_t i = 0; i < n; ++i) f(i);
}

}  // namespace cud::kernels
