// SPDX-License-Identifier: Apache-2.0
#include "cud/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cud/kernels.hpp"

namespace cud {

namespace {

void check_point_set(const Tensor& a, const char* what) {
    if (!a.defined() || a.shape().size() != 2 || a.shape()[0] == 0)
        throw std::runtime_error(std::string(what) + ": need a nonempty 2-d point set");
}

// Exact squared W2 between two 1-d empirical distributions via the merged
// quantile sweep; reduces to mean squared sorted differences at equal sizes.
double w2_1d_sorted(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<std::int64_t>(a.size());
    const auto m = static_cast<std::int64_t>(b.size());
    std::int64_t ia = 0, ib = 0;
    double u = 0.0, acc = 0.0;
    while (ia < n && ib < m) {
        const double next_a = static_cast<double>(ia + 1) / static_cast<double>(n);
        const double next_b = static_cast<double>(ib + 1) / static_cast<double>(m);
        const double next = std::min(next_a, next_b);
        const double d = a[static_cast<std::size_t>(ia)] - b[static_cast<std::size_t>(ib)];
        acc += (next - u) * d * d;
        u = next;
        if (next_a <= next) ++ia;
        if (next_b <= next) ++ib;
    }
    return acc;
}

std::vector<double> project_sorted(const Tensor& pts, const std::vector<double>& dir) {
    const std::int64_t n = pts.shape()[0];
    const std::int64_t d = pts.shape()[1];
    std::vector<double> proj(static_cast<std::size_t>(n));
    const double* p = pts.data();
    for (std::int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < d; ++j) acc += p[i * d + j] * dir[static_cast<std::size_t>(j)];
        proj[static_cast<std::size_t>(i)] = acc;
    }
    std::sort(proj.begin(), proj.end());
    return proj;
}

}  // namespace

double sliced_w2(const Tensor& a, const Tensor& b, int n_projections, Rng& rng) {
    check_point_set(a, "sliced_w2");
    check_point_set(b, "sliced_w2");
    if (a.shape()[1] != b.shape()[1]) throw std::runtime_error("sliced_w2: dimension mismatch");
    if (n_projections < 1) throw std::runtime_error("sliced_w2: need at least one projection");
    const std::int64_t d = a.shape()[1];

    // Directions drawn up front so the accumulation order is fixed.
    std::vector<std::vector<double>> dirs(static_cast<std::size_t>(n_projections));
    for (auto& dir : dirs) {
        dir.resize(static_cast<std::size_t>(d));
        double norm = 0.0;
        do {
            norm = 0.0;
            for (auto& v : dir) {
                v = rng.normal();
                norm += v * v;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (auto& v : dir) v /= norm;
    }

    std::vector<double> per_dir(static_cast<std::size_t>(n_projections));
    kernels::apply(n_projections, [&](std::int64_t k) {
        const auto& dir = dirs[static_cast<std::size_t>(k)];
        per_dir[static_cast<std::size_t>(k)] = w2_1d_sorted(project_sorted(a, dir), project_sorted(b, dir));
    });
    return kernels::reduce_sum(per_dir.data(), n_projections) / static_cast<double>(n_projections);
}

double energy_distance(const Tensor& a, const Tensor& b) {
    check_point_set(a, "energy_distance");
    check_point_set(b, "energy_distance");
    if (a.shape()[1] != b.shape()[1]) throw std::runtime_error("energy_distance: dimension mismatch");
    const std::int64_t n = a.shape()[0], m = b.shape()[0], d = a.shape()[1];
    const double* pa = a.data();
    const double* pb = b.data();

    auto dist = [d](const double* x, const double* y) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            const double v = x[j] - y[j];
            acc += v * v;
        }
        return std::sqrt(acc);
    };

    std::vector<double> row_ab(static_cast<std::size_t>(n)), row_aa(static_cast<std::size_t>(n)),
        row_bb(static_cast<std::size_t>(m));
    kernels::apply(n, [&](std::int64_t i) {
        double sab = 0.0, saa = 0.0;
        for (std::int64_t j = 0; j < m; ++j) sab += dist(pa + i * d, pb + j * d);
        for (std::int64_t j = 0; j < n; ++j) saa += dist(pa + i * d, pa + j * d);
        row_ab[static_cast<std::size_t>(i)] = sab;
        row_aa[static_cast<std::size_t>(i)] = saa;
    });
    kernels::apply(m, [&](std::int64_t i) {
        double sbb = 0.0;
        for (std::int64_t j = 0; j < m; ++j) sbb += dist(pb + i * d, pb + j * d);
        row_bb[static_cast<std::size_t>(i)] = sbb;
    });
    const double e_ab = kernels::reduce_sum(row_ab.data(), n) / (static_cast<double>(n) * static_cast<double>(m));
    const double e_aa = kernels::reduce_sum(row_aa.data(), n) / (static_cast<double>(n) * static_cast<double>(n));
    const double e_bb = kernels::reduce_sum(row_bb.data(), m) / (static_cast<double>(m) * static_cast<double>(m));
    return 2.0 * e_ab - e_aa - e_bb;
}

double exact_w2(const Tensor& a, const Tensor& b) {
    check_point_set(a, "exact_w2");
    check_point_set(b, "exact_w2");
    if (a.shape() != b.shape()) throw std::runtime_error("exact_w2: point sets must match in size");
    const std::int64_t n = a.shape()[0], d = a.shape()[1];
    if (n > 256) throw std::runtime_error("exact_w2: limited to 256 points");

    std::vector<double> cost(static_cast<std::size_t>(n * n));
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t k = 0; k < d; ++k) {
                const double v = a.data()[i * d + k] - b.data()[j * d + k];
                acc += v * v;
            }
            cost[static_cast<std::size_t>(i * n + j)] = acc;
        }

    // Hungarian algorithm with potentials, O(n^3).
    const double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<std::int64_t> match(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
    for (std::int64_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::int64_t j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n + 1), kInf);
        std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
        do {
            used[static_cast<std::size_t>(j0)] = true;
            const std::int64_t i0 = match[static_cast<std::size_t>(j0)];
            double delta = kInf;
            std::int64_t j1 = -1;
            for (std::int64_t j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost[static_cast<std::size_t>((i0 - 1) * n + (j - 1))] -
                                   u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (std::int64_t j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (match[static_cast<std::size_t>(j0)] != 0);
        do {
            const std::int64_t j1 = way[static_cast<std::size_t>(j0)];
            match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (std::int64_t j = 1; j <= n; ++j)
        total += cost[static_cast<std::size_t>((match[static_cast<std::size_t>(j)] - 1) * n + (j - 1))];
    return total / static_cast<double>(n);
}

MetricReport evaluate_samples(const Tensor& samples, const Tensor& reference, int n_projections,
                              std::uint64_t seed) {
    MetricReport report;
    Rng rng(mix_seed(seed, 21));
    report.sliced_w2 = sliced_w2(samples, reference, n_projections, rng);
    report.energy_distance = energy_distance(samples, reference);
    report.n_samples = samples.shape()[0];
    report.seed = seed;
    if (samples.shape()[0] <= 256 && samples.shape() == reference.shape())
        report.exact_w2 = exact_w2(samples, reference);
    return report;
}

std::pair<double, double> transport_cost_compare(const NoiseEncoder& enc, const Tensor& x0, Rng& rng) {
    check_point_set(x0, "transport_cost_compare");
    NoGradScope no_grad;
    const Tensor x1_tilde = enc.encode(x0, rng).first;
    Tensor xi(x0.shape());
    rng.fill_normal(xi.values());
    const std::int64_t total = x0.size();
    const std::int64_t n = x0.shape()[0];
    double coupled = 0.0, independent = 0.0;
    for (std::int64_t i = 0; i < total; ++i) {
        const double dc = x1_tilde.data()[i] - x0.data()[i];
        const double di = xi.data()[i] - x0.data()[i];
        coupled += dc * dc;
        independent += di * di;
    }
    return {coupled / static_cast<double>(n), independent / static_cast<double>(n)};
}

}  // namespace cud
