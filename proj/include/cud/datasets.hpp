// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cud/rng.hpp"
#include "cud/tensor.hpp"

namespace cud {

// Raw generators (unnormalized).
Tensor two_moons_raw(std::int64_t n, double noise, Rng& rng);
Tensor gaussian_ring_raw(std::int64_t n, double radius, double sigma, Rng& rng);
Tensor checkerboard_raw(std::int64_t n, Rng& rng);
// Reads the IDX image byte format (magic 0x00000803), returns [n x rows*cols]
// scaled into [0, 1].
Tensor load_idx_images(const std::string& path);

struct Normalization {
    std::vector<double> mean;
    std::vector<double> scale;  // per-dim std with a 1e-8 floor
};

Normalization normalize_in_place(Tensor& points);
void denormalize_in_place(Tensor& points, const Normalization& norm);

struct Dataset {
    std::string name;
    Tensor points;  // normalized: zero mean, unit scale per dimension
    Normalization norm;
    std::int64_t image_side = 0;  // > 0 when rows are square grayscale images
};

// name in {two_moons, gaussian_ring, checkerboard, idx_images};
// idx_images ignores n and reads idx_path.
Dataset make_dataset(const std::string& name, std::int64_t n, std::uint64_t seed,
                     const std::string& idx_path = "");

}  // namespace cud
