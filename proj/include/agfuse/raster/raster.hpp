#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace agfuse::raster {

/// Planar north-up grid. Rows advance downward (y decreases), so pixel_h is
/// stored positive and the geotransform carries -pixel_h.
struct GeoGrid {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double pixel_w = 1.0;
    double pixel_h = 1.0;
    int width = 1;
    int height = 1;

    void validate() const;

    std::size_t pixel_count() const {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }

    /// World coordinates of a (possibly fractional) column/row position.
    double x_at(double col) const { return origin_x + col * pixel_w; }
    double y_at(double row) const { return origin_y - row * pixel_h; }

    /// Grid with pixels `factor` times larger (dims divided), same origin.
    GeoGrid coarsened(int factor) const;
    /// Grid with pixels `factor` times smaller (dims multiplied), same origin.
    GeoGrid refined(int factor) const;

    bool operator==(const GeoGrid&) const = default;
};

struct BandInfo {
    std::string name;
    std::optional<double> wavelength_nm;

    bool operator==(const BandInfo&) const = default;
};

/// Multi-band 32-bit reflectance grid with a shared per-pixel validity mask
/// (1 = valid). Band planes are stored contiguously, row-major.
class Raster {
public:
    Raster() = default;
    /// Zero-filled, fully valid raster.
    Raster(GeoGrid grid, std::vector<BandInfo> bands);

    const GeoGrid& grid() const { return grid_; }
    void set_grid(const GeoGrid& g);

    int width() const { return grid_.width; }
    int height() const { return grid_.height; }
    std::size_t pixel_count() const { return grid_.pixel_count(); }
    std::size_t band_count() const { return bands_.size(); }

    const std::vector<BandInfo>& bands() const { return bands_; }
    std::vector<BandInfo>& bands() { return bands_; }
    std::vector<std::string> band_names() const;

    std::span<float> band(std::size_t b);
    std::span<const float> band(std::size_t b) const;

    float& at(std::size_t b, int row, int col) {
        return data_[b * pixel_count() + static_cast<std::size_t>(row) * grid_.width + col];
    }
    float at(std::size_t b, int row, int col) const {
        return data_[b * pixel_count() + static_cast<std::size_t>(row) * grid_.width + col];
    }

    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }

    std::span<std::uint8_t> mask() { return mask_; }
    std::span<const std::uint8_t> mask() const { return mask_; }
    bool valid(std::size_t idx) const { return mask_[idx] != 0; }
    bool valid(int row, int col) const {
        return mask_[static_cast<std::size_t>(row) * grid_.width + col] != 0;
    }
    void set_valid(int row, int col, bool v) {
        mask_[static_cast<std::size_t>(row) * grid_.width + col] = v ? 1 : 0;
    }

    bool all_valid() const;
    std::size_t valid_count() const;

    /// Marks every pixel holding a non-finite value in any band invalid.
    void invalidate_non_finite();
    /// Writes `fill` into every band at invalid pixels.
    void fill_invalid(float fill);

    void add_band(BandInfo info, std::vector<float> plane);

    /// Checks the structural invariants (non-empty band list, consistent
    /// sizes, non-finite values masked). Throws a validation error.
    void validate() const;

    bool operator==(const Raster& other) const;

private:
    GeoGrid grid_;
    std::vector<BandInfo> bands_;
    std::vector<float> data_;
    std::vector<std::uint8_t> mask_;
};

/// Bitwise comparison of values (NaN payloads included), mask, grid and bands.
bool bit_identical(const Raster& a, const Raster& b);

}  // namespace agfuse::raster
