#include <doctest.h>

#include <cmath>

#include "agfuse/metrics/metrics.hpp"
#include "support/fixtures.hpp"

using namespace agfuse;
using namespace agfuse::metrics;
using agfuse::testing::kind_of;
using agfuse::testing::random_raster;

TEST_CASE("psnr with unit peak reproduces printed table values") {
    // RMSE -> PSNR pairs as printed for the spectral rows.
    CHECK(std::abs(psnr_from_rmse(0.0164) - 35.70) < 0.005);
    CHECK(std::abs(psnr_from_rmse(0.0164) - 35.69) <= 0.02);
    CHECK(std::abs(psnr_from_rmse(0.0415) - 27.64) < 0.005);
    CHECK(std::abs(psnr_from_rmse(0.0229) - 32.82) <= 0.02);
}

TEST_CASE("identical rasters give zero error and a capped PSNR") {
    const auto r = random_raster(6, 5, 3, 1);
    const MetricsReport m = evaluate(r, r);
    CHECK(m.rmse == 0.0);
    CHECK(m.mae == 0.0);
    CHECK(m.psnr_capped);
    CHECK(m.psnr == kPsnrCapDb);
    CHECK(m.n_valid == 30);
}

TEST_CASE("evaluate pools bands and is symmetric") {
    auto a = random_raster(7, 4, 2, 1);
    auto b = random_raster(7, 4, 2, 2);
    const MetricsReport ab = evaluate(a, b);
    const MetricsReport ba = evaluate(b, a);
    CHECK(ab.rmse == ba.rmse);
    CHECK(ab.mae == ba.mae);

    double sq = 0.0, abs_sum = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i) {
        const double d = double(a.values()[i]) - double(b.values()[i]);
        sq += d * d;
        abs_sum += std::abs(d);
    }
    const double n = double(a.values().size());
    CHECK(ab.rmse == doctest::Approx(std::sqrt(sq / n)).epsilon(1e-12));
    CHECK(ab.mae == doctest::Approx(abs_sum / n).epsilon(1e-12));
    CHECK(ab.per_band.size() == 2);
    CHECK(std::isfinite(ab.psnr));
}

TEST_CASE("invalid regions do not change metrics") {
    auto a = random_raster(8, 8, 2, 3);
    auto b = random_raster(8, 8, 2, 4);
    auto a2 = a;
    auto b2 = b;
    for (int row = 0; row < 8; ++row) {
        for (int col = 0; col < 8; ++col) {
            if (col >= 6) {
                a2.set_valid(row, col, false);
                for (std::size_t k = 0; k < 2; ++k) a2.at(k, row, col) = 5.0f;
            }
        }
    }
    // Reference: same valid pixels, without the garbage region.
    for (int row = 0; row < 8; ++row) {
        for (int col = 6; col < 8; ++col) b2.set_valid(row, col, false);
    }
    const MetricsReport m1 = evaluate(a2, b);
    const MetricsReport m2 = evaluate(a, b2);
    CHECK(m1.rmse == m2.rmse);
    CHECK(m1.mae == m2.mae);
    CHECK(m1.n_valid == 48);
}

TEST_CASE("scaling the error field by alpha lowers PSNR by 20 log10 alpha") {
    auto t = random_raster(10, 10, 2, 5);
    auto noise = random_raster(10, 10, 2, 6);
    auto p1 = t, p2 = t;
    const double alpha = 3.0;
    for (std::size_t i = 0; i < t.values().size(); ++i) {
        const double e = 0.01 * (noise.values()[i] - 0.5);
        p1.values()[i] = float(t.values()[i] + e);
        p2.values()[i] = float(t.values()[i] + alpha * e);
    }
    // Compare on the float-rounded errors to isolate the PSNR arithmetic.
    const MetricsReport m1 = evaluate(p1, t);
    const MetricsReport m2 = evaluate(p2, t);
    CHECK(std::abs((m1.psnr - m2.psnr) - 20.0 * std::log10(alpha)) < 1e-3);
}

TEST_CASE("evaluate error paths") {
    auto a = random_raster(4, 4, 2, 1);
    auto b = random_raster(4, 4, 3, 1);
    CHECK(kind_of([&] { evaluate(a, b); }) == ErrorKind::Alignment);
    auto c = random_raster(4, 5, 2, 1);
    CHECK(kind_of([&] { evaluate(a, c); }) == ErrorKind::Alignment);
    auto d = a;
    for (auto& m : d.mask()) m = 0;
    CHECK(kind_of([&] { evaluate(a, d); }) == ErrorKind::Coverage);
}

TEST_CASE("aggregate pools exactly") {
    auto a = random_raster(4, 4, 2, 1), b = random_raster(4, 4, 2, 2);
    auto c = random_raster(4, 4, 2, 3), d = random_raster(4, 4, 2, 4);
    const MetricsReport pooled = aggregate({evaluate(a, b), evaluate(c, d)});
    double sq = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i) {
        sq += std::pow(double(a.values()[i]) - b.values()[i], 2) + std::pow(double(c.values()[i]) - d.values()[i], 2);
    }
    CHECK(pooled.rmse == doctest::Approx(std::sqrt(sq / 64.0)).epsilon(1e-12));
    CHECK(pooled.n_valid == 32);
    CHECK(csv_row("A", "3/20/19", pooled).rfind("A,3/20/19,", 0) == 0);
}
