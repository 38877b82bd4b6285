#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "agfuse/align/align.hpp"
#include "agfuse/error.hpp"
#include "agfuse/parallel.hpp"
#include "agfuse/raster/resample.hpp"
#include "agfuse/synth/synth.hpp"
#include "support/align_oracle.hpp"
#include "support/fixtures.hpp"
#include "support/scenes.hpp"

using namespace agfuse;
using agfuse::raster::GeoGrid;
using agfuse::raster::Raster;

using namespace agfuse::testing;


TEST_CASE("snap_to_grid on an already aligned grid is an identity crop") {
    Raster fine = testing::random_raster(80, 80, 3, 1, 0.125);
    GeoGrid g = fine.grid();
    g.origin_x = 500.0;
    g.origin_y = 1000.0;
    fine.set_grid(g);
    const GeoGrid coarse{500.0, 1000.0, 1.0, 1.0, 10, 10};
    const Raster out = align::snap_to_grid(fine, coarse, 0.125);
    CHECK(raster::bit_identical(out, fine));
}

TEST_CASE("snap_to_grid with a sub-pixel origin offset lands on coarse corners") {
    Raster fine = testing::random_raster(80, 80, 2, 2, 0.125);
    GeoGrid g = fine.grid();
    g.origin_x = 0.06;
    g.origin_y = 10.0 - 0.06;
    fine.set_grid(g);
    const GeoGrid coarse{0.0, 10.0, 1.0, 1.0, 10, 10};
    const Raster out = align::snap_to_grid(fine, coarse, 0.125);
    const GeoGrid& og = out.grid();
    CHECK(og.pixel_w == 0.125);
    CHECK(std::abs(og.origin_x - std::round(og.origin_x)) < 1e-9);
    CHECK(std::abs(og.origin_y - std::round(og.origin_y)) < 1e-9);
    CHECK(og.width % 8 == 0);
    CHECK(og.height % 8 == 0);
    CHECK(og.width > 0);
    for (int row = 0; row < og.height; ++row) {
        for (int col = 0; col < og.width; ++col) {
            const double x0 = og.x_at(col), x1 = og.x_at(col + 1);
            const double y0 = og.y_at(row), y1 = og.y_at(row + 1);
            // Footprint inside exactly one coarse pixel.
            CHECK(std::floor(x0 + 1e-9) == std::floor(x1 - 1e-9));
            CHECK(std::floor(10.0 - y0 + 1e-9) == std::floor(10.0 - y1 - 1e-9));
            // Nearest-neighbour sample of the fine pixel holding the centre.
            const double xc = og.x_at(col + 0.5), yc = og.y_at(row + 0.5);
            const int fc = static_cast<int>(std::floor((xc - g.origin_x) / 0.125));
            const int fr = static_cast<int>(std::floor((g.origin_y - yc) / 0.125));
            REQUIRE(fc >= 0);
            REQUIRE(fr >= 0);
            REQUIRE(fc < 80);
            REQUIRE(fr < 80);
            CHECK(out.at(1, row, col) == fine.at(1, fr, fc));
            CHECK(out.valid(row, col));
        }
    }
}

TEST_CASE("10 m coarse over 0.125 m target gives 80x80 per coarse pixel") {
    Raster fine = testing::random_raster(160, 160, 1, 3, 0.125);
    const GeoGrid coarse{0.0, 0.0, 10.0, 10.0, 2, 2};
    const Raster out = align::snap_to_grid(fine, coarse, 0.125);
    CHECK(out.width() == 160);
    CHECK(out.width() / coarse.width == 80);
    CHECK(out.grid().coarsened(80).pixel_w == 10.0);
}

TEST_CASE("snap_to_grid errors") {
    Raster fine = testing::random_raster(16, 16, 1, 3, 0.125);
    CHECK(testing::kind_of([&] { align::snap_to_grid(fine, GeoGrid{0, 0, 1.0, 1.0, 4, 4}, 0.3); }) ==
          ErrorKind::Geometry);
    CHECK(testing::kind_of([&] { align::snap_to_grid(fine, GeoGrid{100, 0, 1.0, 1.0, 4, 4}, 0.125); }) ==
          ErrorKind::Coverage);
    fine.fill_invalid(0.0f);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) fine.set_valid(r, c, (r + c) % 2 == 0);
    CHECK(testing::kind_of([&] { align::snap_to_grid(fine, GeoGrid{0, 0, 1.0, 1.0, 2, 2}, 0.125); }) ==
          ErrorKind::Coverage);
}

TEST_CASE("score_shift self consistency and affine relation") {
    const auto cfg = testing::small_scene(32, 8, 5);
    const Raster fine = synth::gen_hyper_scene(cfg);
    Raster coarse = raster::block_mean(fine, 8);
    {
        const auto fit = align::score_shift(fine, coarse, 0, 0);
        CHECK(fit.score < 1e-10);
        for (std::size_t b = 0; b < 8; ++b) {
            CHECK(fit.gains[b].size() == 1);
            CHECK(fit.gains[b][0] == doctest::Approx(1.0).epsilon(1e-6));
            CHECK(std::abs(fit.offsets[b]) < 1e-6);
        }
    }
    for (float& v : coarse.values()) v = static_cast<float>(0.8 * v + 0.05);
    const auto fit = align::score_shift(fine, coarse, 0, 0);
    CHECK(fit.score < 1e-9);
    for (std::size_t b = 0; b < 8; ++b) {
        CHECK(fit.gains[b][0] == doctest::Approx(0.8).epsilon(1e-5));
        CHECK(fit.offsets[b] == doctest::Approx(0.05).epsilon(1e-4));
    }
    CHECK(align::score_shift(fine, coarse, 40, 0).score > fit.score);
    CHECK(align::score_shift(fine, coarse, 0, -40).score > fit.score);
}

TEST_CASE("prefix-sum scoring equals the naive per-block loop") {
    const auto p = make_pair(24, 8, 6, 3, -5, 0.01);
    align::ShiftScorer scorer(p.fine, p.coarse);
    CounterRng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const int dx = static_cast<int>(rng.below(17)) - 8;
        const int dy = static_cast<int>(rng.below(17)) - 8;
        const auto cells = naive_window_cells(p.fine, p.coarse, 8);
        const auto fast = scorer.score(dx, dy, cells);
        const auto slow = naive_score(p.fine, p.coarse, dx, dy, cells, true);
        CHECK(std::abs(fast.score - slow.score) <= 1e-6 * std::max(1.0, slow.score));
        for (std::size_t b = 0; b < 8; ++b) {
            CHECK(fast.gains[b][0] == doctest::Approx(slow.gains[b][0]).epsilon(1e-6));
            CHECK(fast.offsets[b] == doctest::Approx(slow.offsets[b]).epsilon(1e-6));
        }
    }
}

TEST_CASE("window cell set matches the naive coverage rule") {
    auto p = make_pair(16, 8, 7, 0, 0);
    for (int r = 20; r < 30; ++r)
        for (int c = 40; c < 47; ++c) p.fine.set_valid(r, c, false);
    align::ShiftScorer scorer(p.fine, p.coarse);
    CHECK(scorer.covered_cells_for_window(8) == naive_window_cells(p.fine, p.coarse, 8));
}

TEST_CASE("register with no injected shift returns zero") {
    const auto p = make_pair(32, 8, 8, 0, 0);
    const auto est = align::register_images(p.fine, p.coarse);
    CHECK(est.shift_px_x == 0);
    CHECK(est.shift_px_y == 0);
    CHECK(est.shift_x == 0.0);
    CHECK(est.score < 1e-8);
}

TEST_CASE("register recovers an injected (+24,-16) shift as (-24,+16)") {
    const auto p = make_pair(12, 32, 9, 24, -16);
    const auto est = align::register_images(p.fine, p.coarse);
    CHECK(est.shift_px_x == -24);
    CHECK(est.shift_px_y == 16);
    CHECK(est.shift_x == doctest::Approx(-3.0));
    CHECK(est.shift_y == doctest::Approx(2.0));
    CHECK(est.score < 1e-8);
    const auto j = align::to_json(est);
    CHECK(j.at("shift_m").at(0).get<double>() == doctest::Approx(-3.0));
    CHECK(j.at("shift_px").at(1).get<int>() == 16);
    const auto back = align::shift_estimate_from_json(j);
    CHECK(back.shift_px_x == -24);
    CHECK(back.score == est.score);
}

TEST_CASE("coarse-to-fine optimum equals the full-grid oracle") {
    CounterRng rng(23);
    for (int trial = 0; trial < 3; ++trial) {
        const int sx = static_cast<int>(rng.below(17)) - 8;
        const int sy = static_cast<int>(rng.below(17)) - 8;
        const auto p = make_pair(32, 8, 100 + static_cast<std::uint64_t>(trial), sx, sy, 0.02);
        const auto cells = naive_window_cells(p.fine, p.coarse, 8);
        int bx = 0, by = 0;
        double best = std::numeric_limits<double>::infinity();
        for (int dy = -8; dy <= 8; ++dy) {
            for (int dx = -8; dx <= 8; ++dx) {
                const double sc = naive_score(p.fine, p.coarse, dx, dy, cells, true).score;
                if (preferred(dx, dy, sc, bx, by, best)) {
                    bx = dx;
                    by = dy;
                    best = sc;
                }
            }
        }
        const auto est = align::register_images(p.fine, p.coarse);
        CHECK(est.shift_px_x == bx);
        CHECK(est.shift_px_y == by);
        CHECK(std::abs(est.shift_px_x + sx) <= 2);
        CHECK(std::abs(est.shift_px_y + sy) <= 2);
    }
}

TEST_CASE("register is independent of worker count") {
    const auto p = make_pair(24, 8, 10, -5, 7, 0.01);
    const int saved = thread_count();
    set_thread_count(1);
    const auto a = align::to_json(align::register_images(p.fine, p.coarse)).dump();
    set_thread_count(3);
    const auto b = align::to_json(align::register_images(p.fine, p.coarse)).dump();
    set_thread_count(saved);
    CHECK(a == b);
}

TEST_CASE("RGB fine against multiband coarse uses the multivariate regression") {
    auto p = make_pair(24, 8, 11, 6, 3);
    Raster rgb = raster::select_bands(p.fine, {1, 3, 5});
    rgb.bands()[0].name = "R";
    rgb.bands()[1].name = "G";
    rgb.bands()[2].name = "B";
    align::ShiftScorer scorer(rgb, p.coarse);
    CHECK_FALSE(scorer.paired_bands());
    const auto est = align::register_images(rgb, p.coarse);
    CHECK(est.shift_px_x == -6);
    CHECK(est.shift_px_y == -3);
    CHECK(est.gains[0].size() == 3);

    const auto cells = naive_window_cells(rgb, p.coarse, 8);
    const auto fast = scorer.score(-2, 1, cells);
    const auto slow = naive_score(rgb, p.coarse, -2, 1, cells, false);
    CHECK(std::abs(fast.score - slow.score) <= 1e-6 * std::max(1.0, slow.score));
}

TEST_CASE("registration coverage errors") {
    const auto p = make_pair(3, 8, 12, 0, 0);
    CHECK(testing::kind_of([&] { align::register_images(p.fine, p.coarse); }) == ErrorKind::Coverage);
    CHECK(testing::kind_of([&] { align::score_shift(p.fine, p.coarse, 0, 0); }) == ErrorKind::Coverage);
    const auto q = make_pair(8, 8, 12, 0, 0);
    CHECK(testing::kind_of([&] { align::score_shift(q.fine, q.coarse, 60, 0); }) == ErrorKind::Coverage);
}
