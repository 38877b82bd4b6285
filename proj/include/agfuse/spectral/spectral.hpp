#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "agfuse/raster/raster.hpp"

namespace agfuse::spectral {

/// Sampled response of one band: strictly increasing wavelengths (nm) and
/// responses in [0, 1].
struct ResponseCurve {
    std::string name;
    std::vector<double> wavelength_nm;
    std::vector<double> response;

    void validate() const;
    /// Linear interpolation; zero outside the sampled range.
    double at(double wavelength) const;
    /// Response-weighted mean wavelength.
    double centroid() const;
};

struct SpectralResponseTable {
    std::vector<ResponseCurve> bands;

    void validate() const;
    const ResponseCurve& band(const std::string& name) const;
    SpectralResponseTable subset(const std::vector<std::string>& names) const;
};

/// CSV with header `band,wavelength_nm,response`, rows grouped by band and
/// sorted by wavelength within a band.
SpectralResponseTable parse_srf_csv(const std::string& text);
SpectralResponseTable read_srf_csv(const std::filesystem::path& path);
std::string format_srf_csv(const SpectralResponseTable& table);
void write_srf_csv(const SpectralResponseTable& table, const std::filesystem::path& path);

/// The eight VNIR bands simulated by default.
const std::vector<std::string>& sentinel2_vnir_bands();

/// Analytic stand-in for the Sentinel-2A MSI VNIR response: a sixth-order
/// super-Gaussian per band with the nominal centre and bandwidth (FWHM),
/// sampled every 1 nm and truncated below 1e-4.
SpectralResponseTable approximate_sentinel2_vnir();

/// Hyperspectral camera model: Gaussian bands from centres and FWHM, or
/// measured per-band responses when supplied.
struct HyperBandSpec {
    std::vector<double> centers_nm;
    double fwhm_nm = 6.0;
    std::vector<ResponseCurve> measured;

    /// 269 bands, 397.9 + k * 605/268 nm, 6 nm FWHM.
    static HyperBandSpec default269();

    void validate() const;
    std::size_t size() const { return centers_nm.size(); }
    double sigma() const;
};

/// A[i, k] = exp(-(grid_i - center_k)^2 / (2 sigma^2)).
Eigen::MatrixXd gaussian_design_matrix(const HyperBandSpec& spec, std::span<const double> grid);
/// Gaussian matrix, or the measured responses interpolated onto the grid.
Eigen::MatrixXd design_matrix(const HyperBandSpec& spec, std::span<const double> grid);

/// Integer-nm grid spanning a curve, with the curve resampled onto it.
struct ResampledCurve {
    std::vector<double> grid;
    Eigen::VectorXd response;
};
ResampledCurve resample_1nm(const ResponseCurve& curve);

struct TargetBandWeights {
    std::string name;
    double center_nm = 0.0;          // SRF centroid, stored as output band metadata
    std::vector<double> weights;     // normalized: sum to 1
    double residual = 0.0;           // ||A w_raw - srf|| of the raw fit
    double normalization = 1.0;      // sum of raw weights; raw = weights * normalization

    std::vector<double> raw_weights() const;
    std::size_t active_count() const;
};

struct BandWeights {
    HyperBandSpec camera;
    std::vector<TargetBandWeights> bands;

    std::size_t active_union_count() const;
};

/// Nonnegative fit of each target SRF by the camera bands on a 1-nm grid,
/// followed by normalization of the weights to sum 1.
BandWeights fit_band_weights(const SpectralResponseTable& srf, const HyperBandSpec& spec,
                             double tol = 1e-10);

/// Weighted average of cube bands per target band. The cube must carry the
/// camera's band centres (within 0.01 nm) as wavelength metadata.
raster::Raster simulate_bands(const raster::Raster& cube, const BandWeights& weights);

nlohmann::json to_json(const BandWeights& w);
BandWeights band_weights_from_json(const nlohmann::json& j);
void write_band_weights(const BandWeights& w, const std::filesystem::path& path);
BandWeights read_band_weights(const std::filesystem::path& path);

}  // namespace agfuse::spectral
