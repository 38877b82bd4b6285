#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "agfuse/raster/raster.hpp"

namespace agfuse::align {

/// Nearest-neighbour resampling of `fine` onto a grid of `target_pixel`
/// metres whose corners coincide with corners of `coarse_grid`. The output
/// is cropped to the bounding box of coarse pixels fully covered by valid
/// fine data, so every output pixel lies inside exactly one coarse pixel.
raster::Raster snap_to_grid(const raster::Raster& fine, const raster::GeoGrid& coarse_grid,
                            double target_pixel);

/// Regression of coarse values on block-averaged fine values at one shift.
struct RegressionFit {
    double score = 0.0;                       // sum over coarse bands of RSS
    std::size_t cells = 0;                    // participating coarse pixels
    std::vector<std::vector<double>> gains;   // per coarse band: 1 entry (paired) or one per fine band
    std::vector<double> offsets;              // per coarse band
};

struct ShiftScore {
    int dx = 0;
    int dy = 0;
    double score = 0.0;
};

struct ShiftEstimate {
    double shift_x = 0.0;  // metres, image axes (x right, y down)
    double shift_y = 0.0;
    int shift_px_x = 0;    // fine pixels
    int shift_px_y = 0;
    double score = 0.0;
    std::size_t cells = 0;
    std::vector<std::vector<double>> gains;
    std::vector<double> offsets;
    std::vector<ShiftScore> score_grid;

    std::size_t evaluations() const { return score_grid.size(); }
};

/// Scores integer fine-pixel translations of a snapped fine raster against a
/// coarse raster. Block sums come from per-band summed-area tables built
/// once at construction. A shift (dx, dy) moves fine content by (dx, dy):
/// the translated image is T(row, col) = F(row - dy, col - dx).
///
/// Regression form: when both rasters carry the same band names in the same
/// order, each coarse band is regressed on its own fine block mean (gain +
/// offset); otherwise every coarse band is regressed on all fine block means
/// plus an intercept.
class ShiftScorer {
public:
    ShiftScorer(const raster::Raster& fine, const raster::Raster& coarse);

    int scale() const { return scale_; }
    bool paired_bands() const { return paired_; }

    /// Coarse cells whose shifted block is fully inside valid fine data.
    std::vector<std::uint8_t> covered_cells(int dx, int dy) const;
    /// Coarse cells covered for every shift with |dx|, |dy| <= max_shift.
    std::vector<std::uint8_t> covered_cells_for_window(int max_shift) const;

    RegressionFit score(int dx, int dy) const;
    /// Scores using only the given cells (all must be covered at this shift).
    RegressionFit score(int dx, int dy, std::span<const std::uint8_t> cells) const;

private:
    bool block_inside(int cell_col, int cell_row, int dx, int dy, int grow) const;
    double block_sum(std::size_t band, int col0, int row0, int size) const;

    const raster::Raster& fine_;
    const raster::Raster& coarse_;
    int scale_ = 1;
    int cell_col0_ = 0;  // coarse column of the fine raster's origin
    int cell_row0_ = 0;
    bool paired_ = false;
    std::vector<std::vector<double>> integrals_;  // per band, (h+1) x (w+1)
    std::vector<std::int32_t> valid_integral_;
};

/// Convenience wrapper: ShiftScorer(fine, coarse).score(dx, dy), raising a
/// coverage error below 16 participating coarse pixels.
RegressionFit score_shift(const raster::Raster& fine, const raster::Raster& coarse, int dx, int dy);

struct RegisterOptions {
    int coarse_stride = 8;   // pass-1 lattice spacing (fine pixels)
    int refine_radius = 8;   // pass-2 half-width around the pass-1 optimum
    int max_shift = 0;       // search half-width; 0 = one coarse pixel
    std::size_t min_cells = 16;
};

/// Coarse-to-fine search for the translation with the lowest regression
/// error over a fixed cell set (cells covered for every candidate shift).
/// Ties resolve to the smallest |shift|, then smallest dx, then smallest dy.
ShiftEstimate register_images(const raster::Raster& fine, const raster::Raster& coarse,
                              const RegisterOptions& options = {});

/// Order used to pick the optimum; true if a is preferred over b.
bool better_shift(const ShiftScore& a, const ShiftScore& b);

/// Applies an estimated shift to a snapped fine raster (same grid).
raster::Raster apply_shift(const raster::Raster& fine, int dx, int dy);

nlohmann::json to_json(const RegisterOptions& o);
/// Unknown keys are rejected.
RegisterOptions register_options_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ShiftEstimate& e, bool include_grid = true);
ShiftEstimate shift_estimate_from_json(const nlohmann::json& j);

}  // namespace agfuse::align
