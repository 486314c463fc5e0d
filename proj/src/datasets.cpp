// SPDX-License-Identifier: Apache-2.0
#include "cud/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace cud {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Tensor two_moons_raw(std::int64_t n, double noise, Rng& rng) {
    if (n < 1) throw std::runtime_error("two_moons: need n >= 1");
    Tensor pts(Shape{n, 2});
    double* p = pts.data();
    for (std::int64_t i = 0; i < n; ++i) {
        const double a = rng.uniform(0.0, kPi);
        double x, y;
        if (i % 2 == 0) {  // outer arc
            x = std::cos(a);
            y = std::sin(a);
        } else {  // inner arc, shifted and flipped
            x = 1.0 - std::cos(a);
            y = 0.5 - std::sin(a);
        }
        p[i * 2 + 0] = x + noise * rng.normal();
        p[i * 2 + 1] = y + noise * rng.normal();
    }
    return pts;
}

Tensor gaussian_ring_raw(std::int64_t n, double radius, double sigma, Rng& rng) {
    if (n < 1) throw std::runtime_error("gaussian_ring: need n >= 1");
    Tensor pts(Shape{n, 2});
    double* p = pts.data();
    for (std::int64_t i = 0; i < n; ++i) {
        const double a = rng.uniform(0.0, 2.0 * kPi);
        const double r = radius + sigma * rng.normal();
        p[i * 2 + 0] = r * std::cos(a);
        p[i * 2 + 1] = r * std::sin(a);
    }
    return pts;
}

Tensor checkerboard_raw(std::int64_t n, Rng& rng) {
    if (n < 1) throw std::runtime_error("checkerboard: need n >= 1");
    // 4x4 grid on [-2, 2]^2, points drawn uniformly inside the 8 dark cells.
    Tensor pts(Shape{n, 2});
    double* p = pts.data();
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t cell = rng.index(8);
        const std::int64_t row = cell / 2;
        const std::int64_t col = 2 * (cell % 2) + row % 2;
        p[i * 2 + 0] = -2.0 + static_cast<double>(col) + rng.uniform();
        p[i * 2 + 1] = -2.0 + static_cast<double>(row) + rng.uniform();
    }
    return pts;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

std::uint32_t read_be32(std::FILE* f, const char* what) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw std::runtime_error(std::string("idx: truncated ") + what);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace

Tensor load_idx_images(const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("idx: cannot open " + path);
    const std::uint32_t magic = read_be32(f.get(), "magic");
    if (magic != 0x00000803u) throw std::runtime_error("idx: bad magic number in " + path);
    const std::uint32_t count = read_be32(f.get(), "count");
    const std::uint32_t rows = read_be32(f.get(), "rows");
    const std::uint32_t cols = read_be32(f.get(), "cols");
    const std::int64_t d = static_cast<std::int64_t>(rows) * static_cast<std::int64_t>(cols);
    Tensor out(Shape{static_cast<std::int64_t>(count), d});
    std::vector<unsigned char> buf(static_cast<std::size_t>(count) * static_cast<std::size_t>(d));
    if (std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size())
        throw std::runtime_error("idx: truncated pixel data in " + path);
    for (std::size_t i = 0; i < buf.size(); ++i)
        out.values()[i] = static_cast<double>(buf[i]) / 255.0;
    return out;
}

Normalization normalize_in_place(Tensor& points) {
    const std::int64_t n = points.shape()[0], d = points.shape()[1];
    Normalization norm;
    norm.mean.assign(static_cast<std::size_t>(d), 0.0);
    norm.scale.assign(static_cast<std::size_t>(d), 1.0);
    double* p = points.data();
    for (std::int64_t j = 0; j < d; ++j) {
        double m = 0.0;
        for (std::int64_t i = 0; i < n; ++i) m += p[i * d + j];
        m /= static_cast<double>(n);
        double var = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double dv = p[i * d + j] - m;
            var += dv * dv;
        }
        var /= static_cast<double>(n);
        const double s = std::max(std::sqrt(var), 1e-8);
        norm.mean[static_cast<std::size_t>(j)] = m;
        norm.scale[static_cast<std::size_t>(j)] = s;
        for (std::int64_t i = 0; i < n; ++i) p[i * d + j] = (p[i * d + j] - m) / s;
    }
    return norm;
}

void denormalize_in_place(Tensor& points, const Normalization& norm) {
    const std::int64_t n = points.shape()[0], d = points.shape()[1];
    double* p = points.data();
    for (std::int64_t j = 0; j < d; ++j)
        for (std::int64_t i = 0; i < n; ++i)
            p[i * d + j] = p[i * d + j] * norm.scale[static_cast<std::size_t>(j)] + norm.mean[static_cast<std::size_t>(j)];
}

Dataset make_dataset(const std::string& name, std::int64_t n, std::uint64_t seed,
                     const std::string& idx_path) {
    Rng rng(mix_seed(seed, 7));
    Dataset ds;
    ds.name = name;
    if (name == "two_moons") {
        ds.points = two_moons_raw(n, 0.05, rng);
    } else if (name == "gaussian_ring") {
        ds.points = gaussian_ring_raw(n, 1.0, 0.05, rng);
    } else if (name == "checkerboard") {
        ds.points = checkerboard_raw(n, rng);
    } else if (name == "idx_images") {
        if (idx_path.empty()) throw std::runtime_error("dataset: idx_images needs a file path");
        ds.points = load_idx_images(idx_path);
        const auto d = ds.points.shape()[1];
        const auto side = static_cast<std::int64_t>(std::lround(std::sqrt(static_cast<double>(d))));
        if (side * side == d) ds.image_side = side;
    } else {
        throw std::runtime_error("unknown dataset: " + name);
    }
    ds.norm = normalize_in_place(ds.points);
    return ds;
}

}  // namespace cud
