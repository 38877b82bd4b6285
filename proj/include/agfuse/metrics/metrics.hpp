#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "agfuse/raster/raster.hpp"

namespace agfuse::metrics {

/// Reflectance peak used for PSNR.
inline constexpr double kPeak = 1.0;
/// PSNR reported when RMSE < kRmseFloor.
inline constexpr double kPsnrCapDb = 240.0;
inline constexpr double kRmseFloor = 1e-12;

/// 20 log10(peak / rmse), capped at kPsnrCapDb.
double psnr_from_rmse(double rmse, double peak = kPeak);

struct BandMetrics {
    std::string name;
    double rmse = 0.0;
    double mae = 0.0;
    double psnr = 0.0;
};

struct MetricsReport {
    double mse = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
    double psnr = 0.0;
    bool psnr_capped = false;
    std::size_t n_valid = 0;     // jointly valid pixels
    std::size_t band_count = 0;
    // Pooled sums so reports can be aggregated exactly.
    double sum_sq = 0.0;
    double sum_abs = 0.0;
    std::vector<BandMetrics> per_band;
};

/// Pooled statistics over all bands at jointly valid pixels.
MetricsReport evaluate(const raster::Raster& pred, const raster::Raster& truth);

/// Pools several reports as if their pixels had been evaluated together.
MetricsReport aggregate(const std::vector<MetricsReport>& reports);

nlohmann::json to_json(const MetricsReport& r);

inline constexpr const char* kCsvHeader = "site,date,rmse,mae,psnr,n_valid";
std::string csv_row(const std::string& site, const std::string& date, const MetricsReport& r);

}  // namespace agfuse::metrics
