// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include "cud/model.hpp"
#include "cud/rng.hpp"
#include "cud/tensor.hpp"

namespace cud {

// Mean over random unit directions of the squared 1-d Wasserstein-2 distance
// between the projected empirical distributions (exact quantile coupling, so
// unequal sample counts are fine).
double sliced_w2(const Tensor& a, const Tensor& b, int n_projections, Rng& rng);

// Energy distance V-statistic: 2 E|X-Y| - E|X-X'| - E|Y-Y'| with Euclidean
// norms; nonnegative, and exactly zero on identical multisets.
double energy_distance(const Tensor& a, const Tensor& b);

// Exact optimal-assignment mean squared cost (Hungarian); |a| == |b| <= 256.
double exact_w2(const Tensor& a, const Tensor& b);

struct MetricReport {
    double sliced_w2 = 0.0;
    double energy_distance = 0.0;
    std::optional<double> exact_w2;  // present only when n <= 256
    std::int64_t n_samples = 0;
    std::uint64_t seed = 0;
};

MetricReport evaluate_samples(const Tensor& samples, const Tensor& reference, int n_projections,
                              std::uint64_t seed);

// (coupled, independent) transport costs: mean ||x1~(x0) - x0||^2 with the
// encoder's own noise draw vs mean ||xi - x0||^2 with fresh independent noise.
std::pair<double, double> transport_cost_compare(const NoiseEncoder& enc, const Tensor& x0, Rng& rng);

}  // namespace cud
