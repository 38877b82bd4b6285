#include "agfuse/spectral/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "agfuse/bytes.hpp"
#include "agfuse/error.hpp"
#include "agfuse/spectral/nnls.hpp"

namespace agfuse::spectral {

using nlohmann::json;

void ResponseCurve::validate() const {
    require(!name.empty(), ErrorKind::Validation, "response curve needs a name");
    require(wavelength_nm.size() == response.size(), ErrorKind::Validation,
            "response curve '" + name + "' has mismatched columns");
    require(wavelength_nm.size() >= 2, ErrorKind::Validation,
            "response curve '" + name + "' needs at least 2 samples");
    for (std::size_t i = 0; i < response.size(); ++i) {
        require(std::isfinite(wavelength_nm[i]), ErrorKind::Validation, "non-finite wavelength");
        require(response[i] >= 0.0 && response[i] <= 1.0, ErrorKind::Validation,
                "response of '" + name + "' outside [0,1]");
        if (i > 0) {
            require(wavelength_nm[i] > wavelength_nm[i - 1], ErrorKind::Validation,
                    "wavelengths of '" + name + "' not strictly increasing");
        }
    }
}

double ResponseCurve::at(double wl) const {
    if (wl < wavelength_nm.front() || wl > wavelength_nm.back()) return 0.0;
    const auto it = std::upper_bound(wavelength_nm.begin(), wavelength_nm.end(), wl);
    if (it == wavelength_nm.end()) return response.back();
    const std::size_t hi = static_cast<std::size_t>(it - wavelength_nm.begin());
    const std::size_t lo = hi - 1;
    const double t = (wl - wavelength_nm[lo]) / (wavelength_nm[hi] - wavelength_nm[lo]);
    return response[lo] + t * (response[hi] - response[lo]);
}

double ResponseCurve::centroid() const {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < response.size(); ++i) {
        num += wavelength_nm[i] * response[i];
        den += response[i];
    }
    return den > 0.0 ? num / den : 0.5 * (wavelength_nm.front() + wavelength_nm.back());
}

void SpectralResponseTable::validate() const {
    require(!bands.empty(), ErrorKind::Validation, "spectral response table is empty");
    for (const auto& b : bands) b.validate();
}

const ResponseCurve& SpectralResponseTable::band(const std::string& name) const {
    for (const auto& b : bands) {
        if (b.name == name) return b;
    }
    fail(ErrorKind::Validation, "SRF has no band '" + name + "'");
}

SpectralResponseTable SpectralResponseTable::subset(const std::vector<std::string>& names) const {
    SpectralResponseTable t;
    for (const auto& n : names) t.bands.push_back(band(n));
    return t;
}

SpectralResponseTable parse_srf_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::Validation, "SRF CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "band,wavelength_nm,response") {
        fail(ErrorKind::Validation, "SRF CSV header must be 'band,wavelength_nm,response'");
    }
    SpectralResponseTable table;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string name, wl, resp;
        if (!std::getline(row, name, ',') || !std::getline(row, wl, ',') || !std::getline(row, resp)) {
            fail(ErrorKind::Validation, "SRF CSV line " + std::to_string(lineno) + " needs 3 fields");
        }
        double w = 0.0;
        double r = 0.0;
        try {
            std::size_t used = 0;
            w = std::stod(wl, &used);
            if (used != wl.size()) throw std::invalid_argument(wl);
            r = std::stod(resp, &used);
            if (used != resp.size()) throw std::invalid_argument(resp);
        } catch (const std::exception&) {
            fail(ErrorKind::Validation, "SRF CSV line " + std::to_string(lineno) + " has a bad number");
        }
        if (table.bands.empty() || table.bands.back().name != name) {
            for (const auto& b : table.bands) {
                if (b.name == name) {
                    fail(ErrorKind::Validation, "SRF CSV rows for band '" + name + "' are not contiguous");
                }
            }
            table.bands.push_back({name, {}, {}});
        }
        table.bands.back().wavelength_nm.push_back(w);
        table.bands.back().response.push_back(r);
    }
    table.validate();
    return table;
}

SpectralResponseTable read_srf_csv(const std::filesystem::path& path) {
    return parse_srf_csv(bytes::read_text(path));
}

std::string format_srf_csv(const SpectralResponseTable& table) {
    std::ostringstream out;
    out.precision(17);
    out << "band,wavelength_nm,response\n";
    for (const auto& b : table.bands) {
        for (std::size_t i = 0; i < b.response.size(); ++i) {
            out << b.name << ',' << b.wavelength_nm[i] << ',' << b.response[i] << '\n';
        }
    }
    return out.str();
}

void write_srf_csv(const SpectralResponseTable& table, const std::filesystem::path& path) {
    bytes::write_text(path, format_srf_csv(table));
}

const std::vector<std::string>& sentinel2_vnir_bands() {
    static const std::vector<std::string> names = {"B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A"};
    return names;
}

SpectralResponseTable approximate_sentinel2_vnir() {
    struct Nominal {
        const char* name;
        double center;
        double width;
    };
    // Sentinel-2A MSI nominal central wavelengths and bandwidths (nm).
    static constexpr Nominal kBands[] = {
        {"B2", 492.4, 66.0}, {"B3", 559.8, 36.0}, {"B4", 664.6, 31.0}, {"B5", 704.1, 15.0},
        {"B6", 740.5, 15.0}, {"B7", 782.8, 20.0}, {"B8", 832.8, 106.0}, {"B8A", 864.7, 21.0},
    };
    SpectralResponseTable table;
    for (const auto& nb : kBands) {
        ResponseCurve c{nb.name, {}, {}};
        const double lo = std::floor(nb.center - nb.width - 20.0);
        const double hi = std::ceil(nb.center + nb.width + 20.0);
        for (double wl = lo; wl <= hi; wl += 1.0) {
            const double u = 2.0 * (wl - nb.center) / nb.width;
            double r = std::exp(-std::numbers::ln2 * std::pow(std::abs(u), 6.0));
            if (r < 1e-4) r = 0.0;
            c.wavelength_nm.push_back(wl);
            c.response.push_back(r);
        }
        table.bands.push_back(std::move(c));
    }
    return table;
}

HyperBandSpec HyperBandSpec::default269() {
    HyperBandSpec s;
    s.fwhm_nm = 6.0;
    s.centers_nm.resize(269);
    for (int k = 0; k < 269; ++k) s.centers_nm[static_cast<std::size_t>(k)] = 397.9 + k * (605.0 / 268.0);
    return s;
}

void HyperBandSpec::validate() const {
    require(!centers_nm.empty(), ErrorKind::Validation, "camera has no bands");
    require(fwhm_nm > 0.0, ErrorKind::Validation, "camera fwhm must be > 0");
    for (std::size_t i = 1; i < centers_nm.size(); ++i) {
        require(centers_nm[i] > centers_nm[i - 1], ErrorKind::Validation,
                "camera band centres must be strictly increasing");
    }
    if (!measured.empty()) {
        require(measured.size() == centers_nm.size(), ErrorKind::Validation,
                "measured camera responses must cover every band");
        for (const auto& m : measured) m.validate();
    }
}

double HyperBandSpec::sigma() const { return fwhm_nm / (2.0 * std::sqrt(2.0 * std::numbers::ln2)); }

Eigen::MatrixXd gaussian_design_matrix(const HyperBandSpec& spec, std::span<const double> grid) {
    for (std::size_t i = 1; i < grid.size(); ++i) {
        require(grid[i] > grid[i - 1], ErrorKind::Validation, "wavelength grid must be strictly increasing");
    }
    const double s = spec.sigma();
    const double inv = 1.0 / (2.0 * s * s);
    Eigen::MatrixXd A(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(spec.size()));
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        for (Eigen::Index k = 0; k < A.cols(); ++k) {
            const double d = grid[static_cast<std::size_t>(i)] - spec.centers_nm[static_cast<std::size_t>(k)];
            A(i, k) = std::exp(-d * d * inv);
        }
    }
    return A;
}

Eigen::MatrixXd design_matrix(const HyperBandSpec& spec, std::span<const double> grid) {
    if (spec.measured.empty()) return gaussian_design_matrix(spec, grid);
    Eigen::MatrixXd A(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(spec.size()));
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        for (Eigen::Index k = 0; k < A.cols(); ++k) {
            A(i, k) = spec.measured[static_cast<std::size_t>(k)].at(grid[static_cast<std::size_t>(i)]);
        }
    }
    return A;
}

ResampledCurve resample_1nm(const ResponseCurve& curve) {
    ResampledCurve out;
    const double lo = std::ceil(curve.wavelength_nm.front());
    const double hi = std::floor(curve.wavelength_nm.back());
    for (double wl = lo; wl <= hi; wl += 1.0) out.grid.push_back(wl);
    out.response.resize(static_cast<Eigen::Index>(out.grid.size()));
    for (std::size_t i = 0; i < out.grid.size(); ++i) {
        out.response[static_cast<Eigen::Index>(i)] = curve.at(out.grid[i]);
    }
    return out;
}

std::vector<double> TargetBandWeights::raw_weights() const {
    std::vector<double> raw(weights);
    for (double& w : raw) w *= normalization;
    return raw;
}

std::size_t TargetBandWeights::active_count() const {
    return static_cast<std::size_t>(std::count_if(weights.begin(), weights.end(), [](double w) { return w > 0.0; }));
}

std::size_t BandWeights::active_union_count() const {
    if (bands.empty()) return 0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < bands.front().weights.size(); ++k) {
        bool any = false;
        for (const auto& b : bands) any = any || b.weights[k] > 0.0;
        count += any ? 1 : 0;
    }
    return count;
}

BandWeights fit_band_weights(const SpectralResponseTable& srf, const HyperBandSpec& spec, double tol) {
    srf.validate();
    spec.validate();
    const double margin = 3.0 * spec.sigma();
    const double cam_lo = spec.centers_nm.front() - margin;
    const double cam_hi = spec.centers_nm.back() + margin;

    BandWeights out;
    out.camera = spec;
    for (const auto& curve : srf.bands) {
        if (curve.wavelength_nm.back() < cam_lo || curve.wavelength_nm.front() > cam_hi) {
            fail(ErrorKind::Domain, "SRF band '" + curve.name + "' does not overlap the camera range");
        }
        const ResampledCurve target = resample_1nm(curve);
        require(target.grid.size() >= 2, ErrorKind::Domain,
                "SRF band '" + curve.name + "' spans less than 2 nm");
        const Eigen::MatrixXd A = design_matrix(spec, target.grid);
        const NnlsResult fit = nnls(A, target.response, tol);

        const double total = fit.x.sum();
        if (!(total > 0.0)) {
            fail(ErrorKind::Domain, "SRF band '" + curve.name + "' has no response the camera can reproduce");
        }
        TargetBandWeights tb;
        tb.name = curve.name;
        tb.center_nm = curve.centroid();
        tb.residual = fit.residual_norm;
        tb.normalization = total;
        tb.weights.resize(spec.size());
        for (std::size_t k = 0; k < spec.size(); ++k) tb.weights[k] = fit.x[static_cast<Eigen::Index>(k)] / total;
        out.bands.push_back(std::move(tb));
    }
    return out;
}

raster::Raster simulate_bands(const raster::Raster& cube, const BandWeights& weights) {
    const std::size_t K = weights.camera.size();
    require(!weights.bands.empty(), ErrorKind::Validation, "band weights are empty");
    if (cube.band_count() != K) {
        fail(ErrorKind::Schema, "cube has " + std::to_string(cube.band_count()) + " bands, weights expect " +
                                    std::to_string(K));
    }
    for (std::size_t k = 0; k < K; ++k) {
        const auto& wl = cube.bands()[k].wavelength_nm;
        if (!wl || std::abs(*wl - weights.camera.centers_nm[k]) > 0.01) {
            fail(ErrorKind::Schema, "cube band " + std::to_string(k) + " wavelength does not match the camera");
        }
    }

    std::vector<raster::BandInfo> infos;
    for (const auto& tb : weights.bands) infos.push_back({tb.name, tb.center_nm});
    raster::Raster out(cube.grid(), infos);
    std::copy(cube.mask().begin(), cube.mask().end(), out.mask().begin());

    const std::size_t n = cube.pixel_count();
    std::vector<double> acc(n);
    for (std::size_t t = 0; t < weights.bands.size(); ++t) {
        const auto& w = weights.bands[t].weights;
        require(w.size() == K, ErrorKind::Schema, "weight vector length does not match camera");
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            if (w[k] == 0.0) continue;
            const auto plane = cube.band(k);
            for (std::size_t i = 0; i < n; ++i) acc[i] += w[k] * plane[i];
        }
        auto dst = out.band(t);
        for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(acc[i]);
    }
    out.fill_invalid(0.0f);
    return out;
}

json to_json(const BandWeights& w) {
    json bands = json::array();
    for (const auto& b : w.bands) {
        bands.push_back({{"name", b.name},
                         {"center_nm", b.center_nm},
                         {"weights", b.weights},
                         {"residual", b.residual},
                         {"normalization", b.normalization}});
    }
    json camera = {{"centers", w.camera.centers_nm}, {"fwhm", w.camera.fwhm_nm}};
    if (!w.camera.measured.empty()) camera["measured_response"] = true;
    return {{"camera", camera}, {"bands", bands}};
}

BandWeights band_weights_from_json(const json& j) {
    BandWeights w;
    try {
        w.camera.centers_nm = j.at("camera").at("centers").get<std::vector<double>>();
        w.camera.fwhm_nm = j.at("camera").at("fwhm").get<double>();
        for (const auto& b : j.at("bands")) {
            TargetBandWeights tb;
            tb.name = b.at("name").get<std::string>();
            tb.center_nm = b.value("center_nm", 0.0);
            tb.weights = b.at("weights").get<std::vector<double>>();
            tb.residual = b.at("residual").get<double>();
            tb.normalization = b.at("normalization").get<double>();
            w.bands.push_back(std::move(tb));
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, std::string("malformed weight file: ") + e.what());
    }
    w.camera.validate();
    for (const auto& tb : w.bands) {
        require(tb.weights.size() == w.camera.size(), ErrorKind::Validation,
                "weight vector length does not match camera for '" + tb.name + "'");
        for (double v : tb.weights) require(v >= 0.0, ErrorKind::Validation, "negative band weight");
    }
    return w;
}

void write_band_weights(const BandWeights& w, const std::filesystem::path& path) {
    bytes::write_text(path, to_json(w).dump(2) + "\n");
}

BandWeights read_band_weights(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(bytes::read_text(path));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Validation, std::string("weight file is not JSON: ") + e.what());
    }
    return band_weights_from_json(j);
}

}  // namespace agfuse::spectral
