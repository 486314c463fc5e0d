// SPDX-License-Identifier: Apache-2.0
#include "cud/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cud::kernels {

namespace {
int g_max_threads = 0;  // 0 = runtime default

int effective_threads() {
#ifdef _OPENMP
    if (g_max_threads > 0) return g_max_threads;
    return omp_get_max_threads();
#else
    return 1;
#endif
}

constexpr std::int64_t kParallelGrain = 8192;  // below this, threading costs more than it saves
constexpr std::int64_t kSumBlock = 1024;
}  // namespace

void set_max_threads(int n) { g_max_threads = n; }
int max_threads() { return effective_threads(); }

namespace detail {
void parallel_ranges(std::int64_t n, void* ctx, void (*body)(void*, std::int64_t, std::int64_t)) {
#ifdef _OPENMP
    const int nt = effective_threads();
    if (nt > 1 && n >= kParallelGrain) {
#pragma omp parallel for schedule(static) num_threads(nt)
        for (std::int64_t chunk = 0; chunk < nt; ++chunk) {
            const std::int64_t lo = n * chunk / nt;
            const std::int64_t hi = n * (chunk + 1) / nt;
            body(ctx, lo, hi);
        }
        return;
    }
#endif
    body(ctx, 0, n);
}
}  // namespace detail

namespace {

inline double dot_element(const double* a, bool ta, const double* b, bool tb,
                          std::int64_t m, std::int64_t k, std::int64_t n,
                          std::int64_t i, std::int64_t j) {
    double acc = 0.0;
    if (!ta && !tb) {
        const double* ai = a + i * k;
        for (std::int64_t p = 0; p < k; ++p) acc += ai[p] * b[p * n + j];
    } else if (ta && !tb) {
        for (std::int64_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
    } else if (!ta && tb) {
        const double* ai = a + i * k;
        const double* bj = b + j * k;
        for (std::int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
    } else {
        const double* bj = b + j * k;
        for (std::int64_t p = 0; p < k; ++p) acc += a[p * m + i] * bj[p];
    }
    return acc;
}

}  // namespace

void matmul_serial(const double* a, bool ta, const double* b, bool tb,
                   double* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) c[i * n + j] = dot_element(a, ta, b, tb, m, k, n, i, j);
}

void matmul(const double* a, bool ta, const double* b, bool tb,
            double* c, std::int64_t m, std::int64_t k, std::int64_t n) {
#ifdef _OPENMP
    const int nt = effective_threads();
    if (nt > 1 && m * n * k >= kParallelGrain && m > 1) {
#pragma omp parallel for schedule(static) num_threads(nt)
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) c[i * n + j] = dot_element(a, ta, b, tb, m, k, n, i, j);
        return;
    }
#endif
    matmul_serial(a, ta, b, tb, c, m, k, n);
}

double reduce_sum_serial(const double* x, std::int64_t n) {
    const std::int64_t nblocks = (n + kSumBlock - 1) / kSumBlock;
    double total = 0.0;
    for (std::int64_t blk = 0; blk < nblocks; ++blk) {
        const std::int64_t lo = blk * kSumBlock;
        const std::int64_t hi = std::min(lo + kSumBlock, n);
        double part = 0.0;
        for (std::int64_t i = lo; i < hi; ++i) part += x[i];
        total += part;
    }
    return total;
}

double reduce_sum(const double* x, std::int64_t n) {
#ifdef _OPENMP
    const int nt = effective_threads();
    const std::int64_t nblocks = (n + kSumBlock - 1) / kSumBlock;
    if (nt > 1 && n >= kParallelGrain) {
        std::vector<double> parts(static_cast<std::size_t>(nblocks));
#pragma omp parallel for schedule(static) num_threads(nt)
        for (std::int64_t blk = 0; blk < nblocks; ++blk) {
            const std::int64_t lo = blk * kSumBlock;
            const std::int64_t hi = std::min(lo + kSumBlock, n);
            double part = 0.0;
            for (std::int64_t i = lo; i < hi; ++i) part += x[i];
            parts[static_cast<std::size_t>(blk)] = part;
        }
        double total = 0.0;
        for (std::int64_t blk = 0; blk < nblocks; ++blk) total += parts[static_cast<std::size_t>(blk)];
        return total;
    }
#endif
    return reduce_sum_serial(x, n);
}

void col_sum_serial(const double* x, std::int64_t m, std::int64_t n, double* out) {
    for (std::int64_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < m; ++i) acc += x[i * n + j];
        out[j] = acc;
    }
}

void col_sum(const double* x, std::int64_t m, std::int64_t n, double* out) {
#ifdef _OPENMP
    const int nt = effective_threads();
    if (nt > 1 && m * n >= kParallelGrain && n > 1) {
#pragma omp parallel for schedule(static) num_threads(nt)
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < m; ++i) acc += x[i * n + j];
            out[j] = acc;
        }
        return;
    }
#endif
    col_sum_serial(x, m, n, out);
}

namespace {
inline void layer_norm_row(const double* xi, const double* gain, const double* bias, double eps,
                           std::int64_t cols, double* yi, double* xhi, double* inv_sd_i) {
    double mean = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) mean += xi[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) {
        const double d = xi[j] - mean;
        var += d * d;
    }
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    *inv_sd_i = inv;
    for (std::int64_t j = 0; j < cols; ++j) {
        const double xh = (xi[j] - mean) * inv;
        xhi[j] = xh;
        yi[j] = xh * gain[j] + bias[j];
    }
}
}  // namespace

void layer_norm_serial(const double* x, const double* gain, const double* bias, double eps,
                       std::int64_t rows, std::int64_t cols, double* y, double* xhat, double* inv_sd) {
    for (std::int64_t i = 0; i < rows; ++i)
        layer_norm_row(x + i * cols, gain, bias, eps, cols, y + i * cols, xhat + i * cols, inv_sd + i);
}

void layer_norm(const double* x, const double* gain, const double* bias, double eps,
                std::int64_t rows, std::int64_t cols, double* y, double* xhat, double* inv_sd) {
#ifdef _OPENMP
    const int nt = effective_threads();
    if (nt > 1 && rows * cols >= kParallelGrain && rows > 1) {
#pragma omp parallel for schedule(static) num_threads(nt)
        for (std::int64_t i = 0; i < rows; ++i)
            layer_norm_row(x + i * cols, gain, bias, eps, cols, y + i * cols, xhat + i * cols, inv_sd + i);
        return;
    }
#endif
    layer_norm_serial(x, gain, bias, eps, rows, cols, y, xhat, inv_sd);
}

}  // namespace cud::kernels
