#include "agfuse/align/align.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Dense>

#include "agfuse/error.hpp"
#include "agfuse/parallel.hpp"
#include "agfuse/raster/resample.hpp"

namespace agfuse::align {

using raster::GeoGrid;
using raster::Raster;

namespace {

/// Integer ratio a / b, or -1 when it is not integral within 1e-6 relative.
int integral_ratio(double a, double b) {
    const double r = a / b;
    const double k = std::round(r);
    if (k < 1.0 || std::abs(r - k) > 1e-6 * k) return -1;
    return static_cast<int>(k);
}

/// Nearest integer when x is within 1e-6 of it; otherwise nullopt.
std::optional<int> near_integer(double x) {
    const double k = std::round(x);
    if (std::abs(x - k) > 1e-6) return std::nullopt;
    return static_cast<int>(k);
}

}  // namespace

Raster snap_to_grid(const Raster& fine, const GeoGrid& coarse_grid, double target_pixel) {
    coarse_grid.validate();
    fine.grid().validate();
    require(target_pixel > 0.0, ErrorKind::Validation, "target pixel size must be > 0");
    const int kx = integral_ratio(coarse_grid.pixel_w, target_pixel);
    const int ky = integral_ratio(coarse_grid.pixel_h, target_pixel);
    if (kx < 0 || ky < 0 || kx != ky) {
        fail(ErrorKind::Geometry, "coarse pixel size is not an integer multiple of the target pixel");
    }
    const int k = kx;
    const GeoGrid& fg = fine.grid();
    const GeoGrid& cg = coarse_grid;

    // Coarse cells overlapping the fine footprint, limited to the coarse raster.
    const double fx1 = fg.x_at(fg.width);
    const double fy1 = fg.y_at(fg.height);
    const int i0 = std::max(0, static_cast<int>(std::floor((fg.origin_x - cg.origin_x) / cg.pixel_w)));
    const int i1 = std::min(cg.width, static_cast<int>(std::ceil((fx1 - cg.origin_x) / cg.pixel_w)));
    const int j0 = std::max(0, static_cast<int>(std::floor((cg.origin_y - fg.origin_y) / cg.pixel_h)));
    const int j1 = std::min(cg.height, static_cast<int>(std::ceil((cg.origin_y - fy1) / cg.pixel_h)));
    const int ncx = i1 - i0;
    const int ncy = j1 - j0;
    if (ncx <= 0 || ncy <= 0) fail(ErrorKind::Coverage, "fine raster does not overlap the coarse grid");

    // Nearest-neighbour source index per output column/row over the candidate window.
    const double ox = cg.origin_x + i0 * cg.pixel_w;
    const double oy = cg.origin_y - j0 * cg.pixel_h;
    std::vector<int> src_col(static_cast<std::size_t>(ncx) * k);
    std::vector<int> src_row(static_cast<std::size_t>(ncy) * k);
    for (std::size_t c = 0; c < src_col.size(); ++c) {
        const double x = ox + (static_cast<double>(c) + 0.5) * target_pixel;
        const double f = std::floor((x - fg.origin_x) / fg.pixel_w);
        src_col[c] = (f >= 0 && f < fg.width) ? static_cast<int>(f) : -1;
    }
    for (std::size_t r = 0; r < src_row.size(); ++r) {
        const double y = oy - (static_cast<double>(r) + 0.5) * target_pixel;
        const double f = std::floor((fg.origin_y - y) / fg.pixel_h);
        src_row[r] = (f >= 0 && f < fg.height) ? static_cast<int>(f) : -1;
    }
    auto source_valid = [&](std::size_t r, std::size_t c) {
        return src_row[r] >= 0 && src_col[c] >= 0 && fine.valid(src_row[r], src_col[c]);
    };

    int ci_min = ncx, ci_max = -1, cj_min = ncy, cj_max = -1;
    for (int cj = 0; cj < ncy; ++cj) {
        for (int ci = 0; ci < ncx; ++ci) {
            bool full = true;
            for (int r = cj * k; r < (cj + 1) * k && full; ++r) {
                for (int c = ci * k; c < (ci + 1) * k && full; ++c) {
                    full = source_valid(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
                }
            }
            if (full) {
                ci_min = std::min(ci_min, ci);
                ci_max = std::max(ci_max, ci);
                cj_min = std::min(cj_min, cj);
                cj_max = std::max(cj_max, cj);
            }
        }
    }
    if (ci_max < 0) fail(ErrorKind::Coverage, "no coarse pixel is fully covered by valid fine data");

    GeoGrid out_grid;
    out_grid.origin_x = cg.origin_x + (i0 + ci_min) * cg.pixel_w;
    out_grid.origin_y = cg.origin_y - (j0 + cj_min) * cg.pixel_h;
    out_grid.pixel_w = target_pixel;
    out_grid.pixel_h = target_pixel;
    out_grid.width = (ci_max - ci_min + 1) * k;
    out_grid.height = (cj_max - cj_min + 1) * k;
    Raster out(out_grid, fine.bands());
    const std::size_t c_off = static_cast<std::size_t>(ci_min) * k;
    const std::size_t r_off = static_cast<std::size_t>(cj_min) * k;
    for (int row = 0; row < out_grid.height; ++row) {
        for (int col = 0; col < out_grid.width; ++col) {
            const std::size_t r = r_off + row;
            const std::size_t c = c_off + col;
            const bool ok = source_valid(r, c);
            out.set_valid(row, col, ok);
            if (!ok) continue;
            for (std::size_t b = 0; b < fine.band_count(); ++b) {
                out.at(b, row, col) = fine.at(b, src_row[r], src_col[c]);
            }
        }
    }
    return out;
}

ShiftScorer::ShiftScorer(const Raster& fine, const Raster& coarse) : fine_(fine), coarse_(coarse) {
    require(fine.band_count() > 0 && coarse.band_count() > 0, ErrorKind::Validation,
            "registration inputs need bands");
    const GeoGrid& fg = fine.grid();
    const GeoGrid& cg = coarse.grid();
    const int sx = integral_ratio(cg.pixel_w, fg.pixel_w);
    const int sy = integral_ratio(cg.pixel_h, fg.pixel_h);
    if (sx < 0 || sx != sy) fail(ErrorKind::Geometry, "coarse pixel is not an integer multiple of the fine pixel");
    scale_ = sx;
    const auto cx = near_integer((fg.origin_x - cg.origin_x) / cg.pixel_w);
    const auto cy = near_integer((cg.origin_y - fg.origin_y) / cg.pixel_h);
    if (!cx || !cy) fail(ErrorKind::Geometry, "fine raster is not snapped to the coarse grid");
    cell_col0_ = *cx;
    cell_row0_ = *cy;
    paired_ = fine.band_names() == coarse.band_names();

    const int w = fg.width;
    const int h = fg.height;
    const std::size_t stride = static_cast<std::size_t>(w) + 1;
    valid_integral_.assign(stride * (static_cast<std::size_t>(h) + 1), 0);
    for (int row = 0; row < h; ++row) {
        std::int32_t run = 0;
        for (int col = 0; col < w; ++col) {
            run += fine.valid(row, col) ? 1 : 0;
            valid_integral_[(row + 1) * stride + col + 1] = valid_integral_[row * stride + col + 1] + run;
        }
    }
    integrals_.resize(fine.band_count());
    for (std::size_t b = 0; b < fine.band_count(); ++b) {
        auto& I = integrals_[b];
        I.assign(stride * (static_cast<std::size_t>(h) + 1), 0.0);
        const auto plane = fine.band(b);
        for (int row = 0; row < h; ++row) {
            double run = 0.0;
            for (int col = 0; col < w; ++col) {
                const std::size_t i = static_cast<std::size_t>(row) * w + col;
                if (fine.valid(i)) run += plane[i];
                I[(row + 1) * stride + col + 1] = I[row * stride + col + 1] + run;
            }
        }
    }
}

bool ShiftScorer::block_inside(int cell_col, int cell_row, int dx, int dy, int grow) const {
    const int col0 = (cell_col - cell_col0_) * scale_ - dx - grow;
    const int row0 = (cell_row - cell_row0_) * scale_ - dy - grow;
    const int size = scale_ + 2 * grow;
    if (col0 < 0 || row0 < 0 || col0 + size > fine_.width() || row0 + size > fine_.height()) return false;
    const std::size_t stride = static_cast<std::size_t>(fine_.width()) + 1;
    const auto at = [&](int r, int c) { return valid_integral_[static_cast<std::size_t>(r) * stride + c]; };
    const std::int64_t count = at(row0 + size, col0 + size) - at(row0, col0 + size) - at(row0 + size, col0) + at(row0, col0);
    return count == static_cast<std::int64_t>(size) * size;
}

double ShiftScorer::block_sum(std::size_t band, int col0, int row0, int size) const {
    const std::size_t stride = static_cast<std::size_t>(fine_.width()) + 1;
    const auto& I = integrals_[band];
    const auto at = [&](int r, int c) { return I[static_cast<std::size_t>(r) * stride + c]; };
    return at(row0 + size, col0 + size) - at(row0, col0 + size) - at(row0 + size, col0) + at(row0, col0);
}

std::vector<std::uint8_t> ShiftScorer::covered_cells(int dx, int dy) const {
    std::vector<std::uint8_t> cells(coarse_.pixel_count(), 0);
    for (int row = 0; row < coarse_.height(); ++row) {
        for (int col = 0; col < coarse_.width(); ++col) {
            cells[static_cast<std::size_t>(row) * coarse_.width() + col] =
                coarse_.valid(row, col) && block_inside(col, row, dx, dy, 0);
        }
    }
    return cells;
}

std::vector<std::uint8_t> ShiftScorer::covered_cells_for_window(int max_shift) const {
    std::vector<std::uint8_t> cells(coarse_.pixel_count(), 0);
    for (int row = 0; row < coarse_.height(); ++row) {
        for (int col = 0; col < coarse_.width(); ++col) {
            cells[static_cast<std::size_t>(row) * coarse_.width() + col] =
                coarse_.valid(row, col) && block_inside(col, row, 0, 0, max_shift);
        }
    }
    return cells;
}

RegressionFit ShiftScorer::score(int dx, int dy) const { return score(dx, dy, covered_cells(dx, dy)); }

RegressionFit ShiftScorer::score(int dx, int dy, std::span<const std::uint8_t> cells) const {
    require(cells.size() == coarse_.pixel_count(), ErrorKind::Validation, "cell filter size mismatch");
    const std::size_t p = fine_.band_count();
    const std::size_t q = coarse_.band_count();
    const double area = static_cast<double>(scale_) * scale_;

    std::vector<int> cols, rows;
    for (int row = 0; row < coarse_.height(); ++row) {
        for (int col = 0; col < coarse_.width(); ++col) {
            if (cells[static_cast<std::size_t>(row) * coarse_.width() + col]) {
                cols.push_back(col);
                rows.push_back(row);
            }
        }
    }
    const auto n = static_cast<Eigen::Index>(cols.size());
    RegressionFit fit;
    fit.cells = cols.size();
    if (n < 2) fail(ErrorKind::Coverage, "fewer than 2 coarse pixels covered at this shift");

    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(p));
    Eigen::MatrixXd Y(n, static_cast<Eigen::Index>(q));
    for (Eigen::Index i = 0; i < n; ++i) {
        const int col0 = (cols[i] - cell_col0_) * scale_ - dx;
        const int row0 = (rows[i] - cell_row0_) * scale_ - dy;
        for (std::size_t b = 0; b < p; ++b) X(i, static_cast<Eigen::Index>(b)) = block_sum(b, col0, row0, scale_) / area;
        for (std::size_t b = 0; b < q; ++b) Y(i, static_cast<Eigen::Index>(b)) = coarse_.at(b, rows[i], cols[i]);
    }
    const Eigen::RowVectorXd xmean = X.colwise().mean();
    const Eigen::RowVectorXd ymean = Y.colwise().mean();
    const Eigen::MatrixXd Xc = X.rowwise() - xmean;
    const Eigen::MatrixXd Yc = Y.rowwise() - ymean;

    if (paired_) {
        for (Eigen::Index b = 0; b < static_cast<Eigen::Index>(q); ++b) {
            const double sxx = Xc.col(b).squaredNorm();
            const double gain = sxx > 0.0 ? Xc.col(b).dot(Yc.col(b)) / sxx : 0.0;
            fit.gains.push_back({gain});
            fit.offsets.push_back(ymean[b] - gain * xmean[b]);
            fit.score += (Yc.col(b) - gain * Xc.col(b)).squaredNorm();
        }
    } else {
        const Eigen::MatrixXd B = Xc.colPivHouseholderQr().solve(Yc);
        const Eigen::MatrixXd resid = Yc - Xc * B;
        for (Eigen::Index b = 0; b < static_cast<Eigen::Index>(q); ++b) {
            std::vector<double> g(B.col(b).data(), B.col(b).data() + B.rows());
            fit.offsets.push_back(ymean[b] - xmean.dot(B.col(b)));
            fit.gains.push_back(std::move(g));
            fit.score += resid.col(b).squaredNorm();
        }
    }
    return fit;
}

RegressionFit score_shift(const Raster& fine, const Raster& coarse, int dx, int dy) {
    const ShiftScorer scorer(fine, coarse);
    const auto cells = scorer.covered_cells(dx, dy);
    const auto count = static_cast<std::size_t>(std::count(cells.begin(), cells.end(), 1));
    if (count < 16) {
        fail(ErrorKind::Coverage, "only " + std::to_string(count) + " coarse pixels covered at shift (" +
                                      std::to_string(dx) + "," + std::to_string(dy) + "); need 16");
    }
    return scorer.score(dx, dy, cells);
}

bool better_shift(const ShiftScore& a, const ShiftScore& b) {
    if (a.score != b.score) return a.score < b.score;
    const long ra = static_cast<long>(a.dx) * a.dx + static_cast<long>(a.dy) * a.dy;
    const long rb = static_cast<long>(b.dx) * b.dx + static_cast<long>(b.dy) * b.dy;
    if (ra != rb) return ra < rb;
    if (a.dx != b.dx) return a.dx < b.dx;
    return a.dy < b.dy;
}

ShiftEstimate register_images(const Raster& fine, const Raster& coarse, const RegisterOptions& options) {
    require(options.coarse_stride >= 1 && options.refine_radius >= 0, ErrorKind::Validation,
            "invalid registration stride/radius");
    const ShiftScorer scorer(fine, coarse);
    const int max_shift = options.max_shift > 0 ? options.max_shift : scorer.scale();
    const auto cells = scorer.covered_cells_for_window(max_shift);
    const auto count = static_cast<std::size_t>(std::count(cells.begin(), cells.end(), 1));
    if (count < options.min_cells) {
        fail(ErrorKind::Coverage, "only " + std::to_string(count) + " coarse pixels stay covered over the ±" +
                                      std::to_string(max_shift) + " px search window; need " +
                                      std::to_string(options.min_cells));
    }

    std::map<std::pair<int, int>, double> evaluated;
    std::vector<ShiftScore> order;
    auto evaluate_all = [&](const std::vector<std::pair<int, int>>& candidates) {
        std::vector<std::pair<int, int>> todo;
        for (const auto& c : candidates) {
            if (!evaluated.contains(c)) todo.push_back(c);
        }
        std::vector<double> scores(todo.size());
        parallel_for(todo.size(), [&](std::size_t i) {
            scores[i] = scorer.score(todo[i].first, todo[i].second, cells).score;
        });
        for (std::size_t i = 0; i < todo.size(); ++i) {
            evaluated[todo[i]] = scores[i];
            order.push_back({todo[i].first, todo[i].second, scores[i]});
        }
    };
    auto best_of = [&] {
        ShiftScore best = order.front();
        for (const auto& s : order) {
            if (better_shift(s, best)) best = s;
        }
        return best;
    };

    std::vector<int> lattice = {0};
    for (int k = options.coarse_stride; k <= max_shift; k += options.coarse_stride) {
        lattice.push_back(k);
        lattice.push_back(-k);
    }
    if (max_shift % options.coarse_stride != 0) {
        lattice.push_back(max_shift);
        lattice.push_back(-max_shift);
    }
    std::sort(lattice.begin(), lattice.end());
    std::vector<std::pair<int, int>> pass1;
    for (int dy : lattice) {
        for (int dx : lattice) pass1.emplace_back(dx, dy);
    }
    evaluate_all(pass1);
    const ShiftScore coarse_best = best_of();

    std::vector<std::pair<int, int>> pass2;
    const int r = options.refine_radius;
    for (int dy = std::max(-max_shift, coarse_best.dy - r); dy <= std::min(max_shift, coarse_best.dy + r); ++dy) {
        for (int dx = std::max(-max_shift, coarse_best.dx - r); dx <= std::min(max_shift, coarse_best.dx + r); ++dx) {
            pass2.emplace_back(dx, dy);
        }
    }
    evaluate_all(pass2);
    const ShiftScore best = best_of();

    const RegressionFit fit = scorer.score(best.dx, best.dy, cells);
    ShiftEstimate est;
    est.shift_px_x = best.dx;
    est.shift_px_y = best.dy;
    est.shift_x = best.dx * fine.grid().pixel_w;
    est.shift_y = best.dy * fine.grid().pixel_h;
    est.score = fit.score;
    est.cells = fit.cells;
    est.gains = fit.gains;
    est.offsets = fit.offsets;
    est.score_grid = std::move(order);
    return est;
}

Raster apply_shift(const Raster& fine, int dx, int dy) { return raster::translate(fine, dx, dy); }

nlohmann::json to_json(const ShiftEstimate& e, bool include_grid) {
    nlohmann::json gains = nlohmann::json::array();
    for (const auto& g : e.gains) {
        if (g.size() == 1) {
            gains.push_back(g.front());
        } else {
            gains.push_back(g);
        }
    }
    nlohmann::json j = {{"shift_m", {e.shift_x, e.shift_y}},
                        {"shift_px", {e.shift_px_x, e.shift_px_y}},
                        {"score", e.score},
                        {"gains", gains},
                        {"offsets", e.offsets},
                        {"evaluations", e.evaluations()},
                        {"cells", e.cells}};
    if (include_grid) {
        nlohmann::json grid = nlohmann::json::array();
        for (const auto& s : e.score_grid) grid.push_back({s.dx, s.dy, s.score});
        j["score_grid"] = std::move(grid);
    }
    return j;
}

ShiftEstimate shift_estimate_from_json(const nlohmann::json& j) {
    ShiftEstimate e;
    try {
        const auto px = j.at("shift_px").get<std::vector<int>>();
        const auto m = j.at("shift_m").get<std::vector<double>>();
        require(px.size() == 2 && m.size() == 2, ErrorKind::Validation, "shift arrays need 2 entries");
        e.shift_px_x = px[0];
        e.shift_px_y = px[1];
        e.shift_x = m[0];
        e.shift_y = m[1];
        e.score = j.value("score", 0.0);
        e.offsets = j.value("offsets", std::vector<double>{});
        if (j.contains("gains")) {
            for (const auto& g : j["gains"]) {
                e.gains.push_back(g.is_array() ? g.get<std::vector<double>>() : std::vector<double>{g.get<double>()});
            }
        }
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorKind::Validation, std::string("malformed shift report: ") + ex.what());
    }
    return e;
}

nlohmann::json to_json(const RegisterOptions& o) {
    return {{"coarse_stride", o.coarse_stride},
            {"refine_radius", o.refine_radius},
            {"max_shift", o.max_shift},
            {"min_cells", o.min_cells}};
}

RegisterOptions register_options_from_json(const nlohmann::json& j) {
    RegisterOptions o;
    require(j.is_object(), ErrorKind::Config, "register options must be a JSON object");
    const auto defaults = to_json(o);
    for (const auto& [key, value] : j.items()) {
        if (!defaults.contains(key)) fail(ErrorKind::Config, "unknown register option '" + key + "'");
    }
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("coarse_stride", o.coarse_stride);
        get("refine_radius", o.refine_radius);
        get("max_shift", o.max_shift);
        get("min_cells", o.min_cells);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("bad register option value: ") + e.what());
    }
    require(o.coarse_stride >= 1 && o.refine_radius >= 0 && o.max_shift >= 0, ErrorKind::Config,
            "register options out of range");
    return o;
}

}  // namespace agfuse::align
