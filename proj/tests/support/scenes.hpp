#pragma once

#include "agfuse/raster/raster.hpp"
#include "agfuse/synth/synth.hpp"

namespace agfuse::testing {

/// Small harness scene with an 8-band camera so tests stay cheap; band
/// names are shared between the fine raster and anything degraded from it.
inline synth::SceneConfig small_scene(int coarse_cells, int scale, std::uint64_t seed) {
    synth::SceneConfig cfg;
    cfg.seed = seed;
    cfg.scale = scale;
    cfg.width = coarse_cells * scale;
    cfg.height = coarse_cells * scale;
    cfg.bands = 8;
    cfg.fwhm_nm = 60.0;
    return cfg;
}

}  // namespace agfuse::testing
