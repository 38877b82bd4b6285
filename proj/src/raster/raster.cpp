#include "agfuse/raster/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "agfuse/error.hpp"

namespace agfuse::raster {

void GeoGrid::validate() const {
    require(pixel_w > 0.0 && std::isfinite(pixel_w), ErrorKind::Validation, "pixel_w must be > 0");
    require(pixel_h > 0.0 && std::isfinite(pixel_h), ErrorKind::Validation, "pixel_h must be > 0");
    require(width >= 1 && height >= 1, ErrorKind::Validation, "grid dimensions must be >= 1");
    require(std::isfinite(origin_x) && std::isfinite(origin_y), ErrorKind::Validation,
            "grid origin must be finite");
}

GeoGrid GeoGrid::coarsened(int factor) const {
    GeoGrid g = *this;
    g.pixel_w *= factor;
    g.pixel_h *= factor;
    g.width /= factor;
    g.height /= factor;
    return g;
}

GeoGrid GeoGrid::refined(int factor) const {
    GeoGrid g = *this;
    g.pixel_w /= factor;
    g.pixel_h /= factor;
    g.width *= factor;
    g.height *= factor;
    return g;
}

Raster::Raster(GeoGrid grid, std::vector<BandInfo> bands)
    : grid_(grid), bands_(std::move(bands)) {
    grid_.validate();
    data_.assign(bands_.size() * grid_.pixel_count(), 0.0f);
    mask_.assign(grid_.pixel_count(), 1);
}

void Raster::set_grid(const GeoGrid& g) {
    require(g.width == grid_.width && g.height == grid_.height, ErrorKind::Validation,
            "set_grid cannot change raster dimensions");
    g.validate();
    grid_ = g;
}

std::vector<std::string> Raster::band_names() const {
    std::vector<std::string> names;
    names.reserve(bands_.size());
    for (const auto& b : bands_) names.push_back(b.name);
    return names;
}

std::span<float> Raster::band(std::size_t b) {
    return std::span<float>(data_).subspan(b * pixel_count(), pixel_count());
}

std::span<const float> Raster::band(std::size_t b) const {
    return std::span<const float>(data_).subspan(b * pixel_count(), pixel_count());
}

bool Raster::all_valid() const {
    return std::all_of(mask_.begin(), mask_.end(), [](std::uint8_t m) { return m != 0; });
}

std::size_t Raster::valid_count() const {
    return static_cast<std::size_t>(std::count_if(mask_.begin(), mask_.end(),
                                                  [](std::uint8_t m) { return m != 0; }));
}

void Raster::invalidate_non_finite() {
    const std::size_t n = pixel_count();
    for (std::size_t b = 0; b < bands_.size(); ++b) {
        const float* plane = data_.data() + b * n;
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(plane[i])) mask_[i] = 0;
        }
    }
}

void Raster::fill_invalid(float fill) {
    const std::size_t n = pixel_count();
    for (std::size_t b = 0; b < bands_.size(); ++b) {
        float* plane = data_.data() + b * n;
        for (std::size_t i = 0; i < n; ++i) {
            if (!mask_[i]) plane[i] = fill;
        }
    }
}

void Raster::add_band(BandInfo info, std::vector<float> plane) {
    require(plane.size() == pixel_count(), ErrorKind::Validation,
            "band plane size does not match grid");
    bands_.push_back(std::move(info));
    data_.insert(data_.end(), plane.begin(), plane.end());
}

void Raster::validate() const {
    grid_.validate();
    require(!bands_.empty(), ErrorKind::Validation, "raster has no bands");
    require(data_.size() == bands_.size() * pixel_count(), ErrorKind::Validation,
            "band storage does not match grid");
    require(mask_.size() == pixel_count(), ErrorKind::Validation, "mask does not match grid");
    const std::size_t n = pixel_count();
    for (std::size_t b = 0; b < bands_.size(); ++b) {
        for (std::size_t i = 0; i < n; ++i) {
            if (mask_[i] && !std::isfinite(data_[b * n + i])) {
                fail(ErrorKind::Validation, "non-finite value at a valid pixel in band '" +
                                                bands_[b].name + "'");
            }
        }
    }
}

bool Raster::operator==(const Raster& other) const {
    return grid_ == other.grid_ && bands_ == other.bands_ && data_ == other.data_ &&
           mask_ == other.mask_;
}

bool bit_identical(const Raster& a, const Raster& b) {
    if (!(a.grid() == b.grid()) || a.bands() != b.bands()) return false;
    const auto va = a.values();
    const auto vb = b.values();
    if (va.size() != vb.size()) return false;
    if (std::memcmp(va.data(), vb.data(), va.size_bytes()) != 0) return false;
    return std::equal(a.mask().begin(), a.mask().end(), b.mask().begin(), b.mask().end());
}

}  // namespace agfuse::raster
