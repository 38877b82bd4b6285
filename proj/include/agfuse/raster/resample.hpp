#pragma once

#include <vector>

#include "agfuse/raster/raster.hpp"

namespace agfuse::raster {

/// Mean of valid pixels over factor x factor blocks. An output pixel is
/// invalid (and zero-filled) when fewer than half its block is valid.
Raster block_mean(const Raster& r, int factor);

/// Catmull-Rom bicubic upsampling on pixel centers with clamped edges.
/// Output pixels whose 4x4 support touches an invalid input are invalid.
Raster upsample_bicubic(const Raster& r, int factor);

/// Band concatenation a ++ b over an identical grid; masks are AND-ed.
Raster stack_bands(const Raster& a, const Raster& b);

/// Window [col0, col0+width) x [row0, row0+height), which must lie inside r.
Raster crop(const Raster& r, int col0, int row0, int width, int height);

/// Subset of bands in the given order.
Raster select_bands(const Raster& r, const std::vector<std::size_t>& indices);

/// Integer translation of content by (dx, dy) pixels on the same grid:
/// out(row, col) = r(row - dy, col - dx). Uncovered pixels become invalid.
Raster translate(const Raster& r, int dx, int dy);

}  // namespace agfuse::raster
