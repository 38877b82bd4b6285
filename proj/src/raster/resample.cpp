#include "agfuse/raster/resample.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "agfuse/error.hpp"

namespace agfuse::raster {

Raster block_mean(const Raster& r, int factor) {
    require(factor >= 1, ErrorKind::Validation, "block factor must be positive");
    require(r.band_count() > 0, ErrorKind::Validation, "raster has no bands");
    const GeoGrid& g = r.grid();
    if (g.width % factor != 0 || g.height % factor != 0) {
        fail(ErrorKind::Geometry, "raster " + std::to_string(g.width) + "x" + std::to_string(g.height) +
                                      " is not divisible by block factor " + std::to_string(factor));
    }
    Raster out(g.coarsened(factor), r.bands());
    const int ow = out.width();
    const int oh = out.height();
    const int block = factor * factor;

    std::vector<int> counts(out.pixel_count(), 0);
    for (int row = 0; row < g.height; ++row) {
        for (int col = 0; col < g.width; ++col) {
            if (r.valid(row, col)) ++counts[static_cast<std::size_t>(row / factor) * ow + col / factor];
        }
    }
    std::vector<double> sums(out.pixel_count());
    for (std::size_t b = 0; b < r.band_count(); ++b) {
        std::fill(sums.begin(), sums.end(), 0.0);
        const auto src = r.band(b);
        for (int row = 0; row < g.height; ++row) {
            const std::size_t orow = static_cast<std::size_t>(row / factor) * ow;
            const std::size_t base = static_cast<std::size_t>(row) * g.width;
            for (int col = 0; col < g.width; ++col) {
                if (r.valid(base + col)) sums[orow + col / factor] += src[base + col];
            }
        }
        auto dst = out.band(b);
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] = 2 * counts[i] >= block ? static_cast<float>(sums[i] / counts[i]) : 0.0f;
        }
    }
    for (int row = 0; row < oh; ++row) {
        for (int col = 0; col < ow; ++col) {
            out.set_valid(row, col, 2 * counts[static_cast<std::size_t>(row) * ow + col] >= block);
        }
    }
    return out;
}

namespace {

// Catmull-Rom weights for taps at offsets -1, 0, 1, 2 from floor(x).
std::array<double, 4> catmull_rom(double t) {
    const double t2 = t * t;
    const double t3 = t2 * t;
    return {0.5 * (-t3 + 2 * t2 - t), 0.5 * (3 * t3 - 5 * t2 + 2), 0.5 * (-3 * t3 + 4 * t2 + t),
            0.5 * (t3 - t2)};
}

struct Taps {
    std::array<int, 4> index;
    std::array<double, 4> weight;
};

std::vector<Taps> make_taps(int in_size, int factor) {
    std::vector<Taps> taps(static_cast<std::size_t>(in_size) * factor);
    for (int o = 0; o < in_size * factor; ++o) {
        const double x = (o + 0.5) / factor - 0.5;
        const double base = std::floor(x);
        Taps& t = taps[o];
        t.weight = catmull_rom(x - base);
        for (int k = 0; k < 4; ++k) {
            t.index[k] = std::clamp(static_cast<int>(base) - 1 + k, 0, in_size - 1);
        }
    }
    return taps;
}

}  // namespace

Raster upsample_bicubic(const Raster& r, int factor) {
    require(factor >= 1, ErrorKind::Validation, "upsample factor must be positive");
    require(r.band_count() > 0, ErrorKind::Validation, "raster has no bands");
    if (factor == 1) return r;
    const GeoGrid& g = r.grid();
    Raster out(g.refined(factor), r.bands());
    const int ow = out.width();
    const int oh = out.height();
    const auto xt = make_taps(g.width, factor);
    const auto yt = make_taps(g.height, factor);

    // Horizontal pass into a (in_h x out_w) buffer, then vertical pass.
    std::vector<double> tmp(static_cast<std::size_t>(g.height) * ow);
    for (std::size_t b = 0; b < r.band_count(); ++b) {
        const auto src = r.band(b);
        for (int row = 0; row < g.height; ++row) {
            const float* line = src.data() + static_cast<std::size_t>(row) * g.width;
            for (int col = 0; col < ow; ++col) {
                const Taps& t = xt[col];
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) {
                    const float v = line[t.index[k]];
                    acc += t.weight[k] * (std::isfinite(v) ? v : 0.0);
                }
                tmp[static_cast<std::size_t>(row) * ow + col] = acc;
            }
        }
        auto dst = out.band(b);
        for (int row = 0; row < oh; ++row) {
            const Taps& t = yt[row];
            for (int col = 0; col < ow; ++col) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) acc += t.weight[k] * tmp[static_cast<std::size_t>(t.index[k]) * ow + col];
                dst[static_cast<std::size_t>(row) * ow + col] = static_cast<float>(acc);
            }
        }
    }

    if (!r.all_valid()) {
        for (int row = 0; row < oh; ++row) {
            for (int col = 0; col < ow; ++col) {
                bool ok = true;
                for (int ky = 0; ky < 4 && ok; ++ky) {
                    for (int kx = 0; kx < 4 && ok; ++kx) ok = r.valid(yt[row].index[ky], xt[col].index[kx]);
                }
                out.set_valid(row, col, ok);
            }
        }
        out.fill_invalid(0.0f);
    }
    return out;
}

Raster stack_bands(const Raster& a, const Raster& b) {
    require(a.band_count() > 0 && b.band_count() > 0, ErrorKind::Validation,
            "cannot stack a raster with no bands");
    if (!(a.grid() == b.grid())) fail(ErrorKind::Alignment, "stack_bands requires identical grids");
    Raster out = a;
    for (std::size_t i = 0; i < b.band_count(); ++i) {
        const auto plane = b.band(i);
        out.add_band(b.bands()[i], std::vector<float>(plane.begin(), plane.end()));
    }
    auto mask = out.mask();
    const auto mb = b.mask();
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (mask[i] && mb[i]) ? 1 : 0;
    return out;
}

Raster crop(const Raster& r, int col0, int row0, int width, int height) {
    const GeoGrid& g = r.grid();
    require(width >= 1 && height >= 1 && col0 >= 0 && row0 >= 0 && col0 + width <= g.width &&
                row0 + height <= g.height,
            ErrorKind::Geometry, "crop window outside raster");
    GeoGrid cg = g;
    cg.origin_x = g.x_at(col0);
    cg.origin_y = g.y_at(row0);
    cg.width = width;
    cg.height = height;
    Raster out(cg, r.bands());
    for (std::size_t b = 0; b < r.band_count(); ++b) {
        for (int row = 0; row < height; ++row) {
            for (int col = 0; col < width; ++col) out.at(b, row, col) = r.at(b, row0 + row, col0 + col);
        }
    }
    for (int row = 0; row < height; ++row) {
        for (int col = 0; col < width; ++col) out.set_valid(row, col, r.valid(row0 + row, col0 + col));
    }
    return out;
}

Raster select_bands(const Raster& r, const std::vector<std::size_t>& indices) {
    require(!indices.empty(), ErrorKind::Validation, "band selection is empty");
    std::vector<BandInfo> infos;
    for (std::size_t i : indices) {
        require(i < r.band_count(), ErrorKind::Validation, "band index out of range");
        infos.push_back(r.bands()[i]);
    }
    Raster out(r.grid(), infos);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto src = r.band(indices[k]);
        std::copy(src.begin(), src.end(), out.band(k).begin());
    }
    std::copy(r.mask().begin(), r.mask().end(), out.mask().begin());
    return out;
}

Raster translate(const Raster& r, int dx, int dy) {
    Raster out(r.grid(), r.bands());
    const int w = r.width();
    const int h = r.height();
    for (int row = 0; row < h; ++row) {
        const int sr = row - dy;
        for (int col = 0; col < w; ++col) {
            const int sc = col - dx;
            const bool inside = sr >= 0 && sr < h && sc >= 0 && sc < w;
            out.set_valid(row, col, inside && r.valid(sr, sc));
            if (!inside) continue;
            for (std::size_t b = 0; b < r.band_count(); ++b) out.at(b, row, col) = r.at(b, sr, sc);
        }
    }
    out.fill_invalid(0.0f);
    return out;
}

}  // namespace agfuse::raster
