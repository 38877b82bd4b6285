#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "agfuse/raster/raster.hpp"
#include "agfuse/rf/forest.hpp"
#include "agfuse/spectral/spectral.hpp"

namespace agfuse::synth {

/// Everything a synthetic scene depends on. Scene i draws its randomness
/// from CounterRng(seed, i, purpose).
struct SceneConfig {
    std::uint64_t seed = 7;
    int width = 640;                 // fine pixels
    int height = 640;
    double pixel_m = 0.125;
    double origin_x = 0.0;
    double origin_y = 0.0;
    // Hyperspectral camera: `bands` Gaussian bands evenly spaced over the range.
    int bands = 269;
    double wavelength_min_nm = 397.9;
    double wavelength_max_nm = 1002.9;
    double fwhm_nm = 6.0;
    int endmembers = 8;
    bool shared_endmembers = true;   // one material library for every scene of a seed
    double material_variability = 0.2;  // per-scene relative jitter of library peak amplitudes
    double length_scale = 3.0;       // finest abundance feature size, fine pixels
    double contrast = 3.0;           // softmax sharpness of the abundance fields
    double noise_sigma = 0.0;        // additive noise on the coarse product
    int shift_x = 0;                 // injected shift, fine pixels
    int shift_y = 0;
    int scale = 8;
    std::vector<double> gains;       // per coarse band; empty = 1
    std::vector<double> offsets;     // per coarse band; empty = 0
    std::vector<std::string> rgb_bands = {"B4", "B3", "B2"};
    bool emit_hyper = false;         // writing 269-band cubes is large

    void validate() const;
    spectral::HyperBandSpec camera() const;
    raster::GeoGrid grid() const;
};

nlohmann::json to_json(const SceneConfig& c);
/// Unknown keys are rejected.
SceneConfig scene_config_from_json(const nlohmann::json& j);

/// Name and identity of the generator used everywhere in the harness.
nlohmann::json prng_description();

struct HyperScene {
    raster::Raster cube;
    std::vector<std::vector<double>> endmember_spectra;  // [endmember][camera band]
    std::vector<std::vector<double>> abundances;         // [endmember][pixel]
};

/// Convex mixture of smooth endmember spectra with smoothed random
/// abundance fields normalized by a softmax.
HyperScene gen_hyper_scene_detailed(const SceneConfig& cfg, std::uint64_t scene_index = 0);
raster::Raster gen_hyper_scene(const SceneConfig& cfg, std::uint64_t scene_index = 0);

/// Coarse counterpart of `fine`: coarse cell (I, J) averages the fine block
/// starting at (J*scale + shift_y, I*scale + shift_x). Blocks not fully
/// inside the image are invalid. Then gain/offset, seeded noise, clip [0,1].
raster::Raster degrade(const raster::Raster& fine, const SceneConfig& cfg, std::uint64_t scene_index = 0);

struct FusionScene {
    std::string id;
    std::string site;
    std::string date;
    std::optional<raster::Raster> hyper;
    raster::Raster truth8;
    raster::Raster rgb;
    raster::Raster coarse;
    raster::Raster coarse_upsampled;
};

/// Deterministic site/date labels: two dates per site.
std::string scene_site(std::size_t index);
std::string scene_date(std::size_t index);

FusionScene make_fusion_scene(const SceneConfig& cfg, const spectral::BandWeights& weights,
                              std::uint64_t scene_index, bool keep_hyper = false);

/// Default split by scene index: the last quarter tests, the eighth before
/// that validates, the rest trains.
std::vector<std::string> default_splits(std::size_t n_scenes);

struct DatasetEntry {
    std::string id;
    std::string split;
    std::string site;
    std::string date;
    std::optional<std::filesystem::path> hyper;
    std::filesystem::path truth8;
    std::filesystem::path rgb;
    std::filesystem::path coarse;
    std::filesystem::path coarse_upsampled;
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    SceneConfig config;
    std::filesystem::path srf;       // SRF table used for truth simulation
    std::filesystem::path weights;   // fitted band weights
    std::vector<DatasetEntry> scenes;
};

nlohmann::json to_json(const DatasetManifest& m);
/// Relative file paths are resolved against `base`.
DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Writes every scene's BSF products, srf.csv, weights.json and
/// manifest.json (file paths relative to `out_dir`).
DatasetManifest make_fusion_dataset(const SceneConfig& cfg, std::size_t n_scenes,
                                    const std::filesystem::path& out_dir);

/// Synthetic field campaign: `n` quadrats placed uniformly inside the raster.
/// Target = 10 * mean(nir) - 4 * mean(red) over the quadrat plus Gaussian
/// noise, a stand-in for a NIR-sensitive crop trait.
struct FieldConfig {
    std::size_t n = 200;
    double side_m = 0.5;
    std::uint64_t seed = 11;
    double noise_sigma = 0.02;
    std::string nir_band = "B8";
    std::string red_band = "B4";
};
nlohmann::json to_json(const FieldConfig& c);
/// Unknown keys are rejected.
FieldConfig field_config_from_json(const nlohmann::json& j);

std::vector<rf::Quadrat> make_field_quadrats(const raster::Raster& truth8, const FieldConfig& cfg);

}  // namespace agfuse::synth
