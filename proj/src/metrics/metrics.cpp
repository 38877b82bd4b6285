#include "agfuse/metrics/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "agfuse/error.hpp"

namespace agfuse::metrics {

double psnr_from_rmse(double rmse, double peak) {
    if (rmse < kRmseFloor) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 20.0 * std::log10(peak / rmse));
}

namespace {

void finish(MetricsReport& r) {
    const double n = static_cast<double>(r.n_valid) * static_cast<double>(r.band_count);
    r.mse = n > 0 ? r.sum_sq / n : 0.0;
    r.rmse = std::sqrt(r.mse);
    r.mae = n > 0 ? r.sum_abs / n : 0.0;
    r.psnr_capped = r.rmse < kRmseFloor;
    r.psnr = psnr_from_rmse(r.rmse);
}

}  // namespace

MetricsReport evaluate(const raster::Raster& pred, const raster::Raster& truth) {
    if (!(pred.grid() == truth.grid())) fail(ErrorKind::Alignment, "evaluate: grids differ");
    if (pred.band_count() != truth.band_count()) {
        fail(ErrorKind::Alignment, "evaluate: band counts differ (" + std::to_string(pred.band_count()) + " vs " +
                                       std::to_string(truth.band_count()) + ")");
    }
    require(pred.band_count() > 0, ErrorKind::Validation, "evaluate: rasters have no bands");

    MetricsReport r;
    r.band_count = pred.band_count();
    const std::size_t n = pred.pixel_count();
    std::vector<std::uint8_t> joint(n);
    for (std::size_t i = 0; i < n; ++i) {
        joint[i] = pred.valid(i) && truth.valid(i);
        r.n_valid += joint[i];
    }
    if (r.n_valid == 0) fail(ErrorKind::Coverage, "evaluate: no jointly valid pixels");

    for (std::size_t b = 0; b < r.band_count; ++b) {
        const auto p = pred.band(b);
        const auto t = truth.band(b);
        double sq = 0.0;
        double ab = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!joint[i]) continue;
            const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
            sq += d * d;
            ab += std::abs(d);
        }
        r.sum_sq += sq;
        r.sum_abs += ab;
        BandMetrics bm;
        bm.name = truth.bands()[b].name;
        bm.rmse = std::sqrt(sq / static_cast<double>(r.n_valid));
        bm.mae = ab / static_cast<double>(r.n_valid);
        bm.psnr = psnr_from_rmse(bm.rmse);
        r.per_band.push_back(bm);
    }
    finish(r);
    return r;
}

MetricsReport aggregate(const std::vector<MetricsReport>& reports) {
    require(!reports.empty(), ErrorKind::Validation, "aggregate: no reports");
    MetricsReport out;
    out.band_count = reports.front().band_count;
    for (const auto& r : reports) {
        require(r.band_count == out.band_count, ErrorKind::Alignment, "aggregate: band counts differ");
        out.sum_sq += r.sum_sq;
        out.sum_abs += r.sum_abs;
        out.n_valid += r.n_valid;
    }
    finish(out);
    return out;
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json bands = nlohmann::json::array();
    for (const auto& b : r.per_band) {
        bands.push_back({{"band", b.name}, {"rmse", b.rmse}, {"mae", b.mae}, {"psnr", b.psnr}});
    }
    return {{"rmse", r.rmse},           {"mae", r.mae},       {"mse", r.mse},
            {"psnr", r.psnr},           {"psnr_capped", r.psnr_capped},
            {"n_valid", r.n_valid},     {"band_count", r.band_count},
            {"per_band", bands}};
}

std::string csv_row(const std::string& site, const std::string& date, const MetricsReport& r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.4f,%zu", r.rmse, r.mae, r.psnr, r.n_valid);
    return site + "," + date + "," + buf;
}

}  // namespace agfuse::metrics
