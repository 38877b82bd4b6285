#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include <doctest.h>

#include "agfuse/error.hpp"
#include "agfuse/raster/raster.hpp"
#include "agfuse/rng.hpp"

namespace agfuse::testing {

inline raster::GeoGrid unit_grid(int width, int height, double pixel = 1.0) {
    return raster::GeoGrid{0.0, 0.0, pixel, pixel, width, height};
}

inline std::vector<raster::BandInfo> named_bands(std::size_t n, const std::string& prefix = "b") {
    std::vector<raster::BandInfo> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({prefix + std::to_string(i), std::nullopt});
    return out;
}

/// Uniform [0,1) values, fully valid.
inline raster::Raster random_raster(int width, int height, std::size_t bands, std::uint64_t seed,
                                    double pixel = 1.0) {
    raster::Raster r(unit_grid(width, height, pixel), named_bands(bands));
    CounterRng rng(seed);
    for (float& v : r.values()) v = static_cast<float>(rng.uniform());
    return r;
}

/// Sum of a few low-frequency sinusoids in [0.1, 0.9]; band-limited enough
/// for interpolation round-trip checks.
inline raster::Raster smooth_raster(int width, int height, std::size_t bands, std::uint64_t seed,
                                    double period = 40.0) {
    raster::Raster r(unit_grid(width, height), named_bands(bands));
    CounterRng rng(seed);
    for (std::size_t b = 0; b < bands; ++b) {
        const double p1 = rng.uniform(0.0, 6.28), p2 = rng.uniform(0.0, 6.28);
        const double fx = rng.uniform(0.5, 1.0), fy = rng.uniform(0.5, 1.0);
        for (int row = 0; row < height; ++row) {
            for (int col = 0; col < width; ++col) {
                const double v = 0.5 + 0.2 * std::sin(6.283185307 * fx * col / period + p1) +
                                 0.2 * std::cos(6.283185307 * fy * row / period + p2);
                r.at(b, row, col) = static_cast<float>(v);
            }
        }
    }
    return r;
}

/// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("agfuse_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Kind of the agfuse::Error thrown by fn; fails the test if none is thrown.
inline ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an agfuse::Error");
    return ErrorKind::Validation;
}

}  // namespace agfuse::testing
