#include "agfuse/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "agfuse/bytes.hpp"
#include "agfuse/error.hpp"
#include "agfuse/parallel.hpp"
#include "agfuse/raster/bsf.hpp"
#include "agfuse/raster/resample.hpp"
#include "agfuse/rng.hpp"

namespace agfuse::synth {

namespace {

// Stream tags for CounterRng(seed, scene, tag).
constexpr std::uint64_t kSpectraStream = 1;
constexpr std::uint64_t kFieldStream = 2;
constexpr std::uint64_t kNoiseStream = 3;
constexpr std::uint64_t kVariabilityStream = 4;

}  // namespace

void SceneConfig::validate() const {
    require(width > 0 && height > 0, ErrorKind::Config, "scene width and height must be positive");
    require(scale >= 1, ErrorKind::Config, "scale must be >= 1");
    require(width % scale == 0 && height % scale == 0, ErrorKind::Config,
            "scene width/height must be divisible by scale " + std::to_string(scale));
    require(pixel_m > 0.0, ErrorKind::Config, "pixel size must be positive");
    require(bands >= 2, ErrorKind::Config, "need at least 2 spectral bands");
    require(wavelength_max_nm > wavelength_min_nm, ErrorKind::Config, "empty wavelength range");
    require(fwhm_nm > 0.0, ErrorKind::Config, "fwhm must be positive");
    require(endmembers >= 1, ErrorKind::Config, "endmember count must be >= 1");
    require(length_scale > 0.0 && contrast >= 0.0, ErrorKind::Config, "invalid abundance field parameters");
    require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), ErrorKind::Config, "noise sigma must be >= 0");
    require(material_variability >= 0.0 && material_variability < 1.0, ErrorKind::Config,
            "material variability must be in [0, 1)");
    require(rgb_bands.size() == 3, ErrorKind::Config, "rgb_bands must name 3 bands");
}

spectral::HyperBandSpec SceneConfig::camera() const {
    spectral::HyperBandSpec spec;
    spec.fwhm_nm = fwhm_nm;
    const double step = (wavelength_max_nm - wavelength_min_nm) / (bands - 1);
    for (int k = 0; k < bands; ++k) spec.centers_nm.push_back(wavelength_min_nm + k * step);
    return spec;
}

raster::GeoGrid SceneConfig::grid() const {
    return {origin_x, origin_y, pixel_m, pixel_m, width, height};
}

nlohmann::json to_json(const SceneConfig& c) {
    return {{"seed", c.seed},
            {"width", c.width},
            {"height", c.height},
            {"pixel_m", c.pixel_m},
            {"origin_x", c.origin_x},
            {"origin_y", c.origin_y},
            {"bands", c.bands},
            {"wavelength_min_nm", c.wavelength_min_nm},
            {"wavelength_max_nm", c.wavelength_max_nm},
            {"fwhm_nm", c.fwhm_nm},
            {"endmembers", c.endmembers},
            {"length_scale", c.length_scale},
            {"contrast", c.contrast},
            {"noise_sigma", c.noise_sigma},
            {"shift_x", c.shift_x},
            {"shift_y", c.shift_y},
            {"scale", c.scale},
            {"gains", c.gains},
            {"offsets", c.offsets},
            {"rgb_bands", c.rgb_bands},
            {"emit_hyper", c.emit_hyper},
            {"shared_endmembers", c.shared_endmembers},
            {"material_variability", c.material_variability}};
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
    require(j.is_object(), ErrorKind::Config, "scene config must be a JSON object");
    SceneConfig c;
    const nlohmann::json defaults = to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (!defaults.contains(key)) fail(ErrorKind::Config, "unknown scene config key '" + key + "'");
    }
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("seed", c.seed);
        get("width", c.width);
        get("height", c.height);
        get("pixel_m", c.pixel_m);
        get("origin_x", c.origin_x);
        get("origin_y", c.origin_y);
        get("bands", c.bands);
        get("wavelength_min_nm", c.wavelength_min_nm);
        get("wavelength_max_nm", c.wavelength_max_nm);
        get("fwhm_nm", c.fwhm_nm);
        get("endmembers", c.endmembers);
        get("length_scale", c.length_scale);
        get("contrast", c.contrast);
        get("noise_sigma", c.noise_sigma);
        get("shift_x", c.shift_x);
        get("shift_y", c.shift_y);
        get("scale", c.scale);
        get("gains", c.gains);
        get("offsets", c.offsets);
        get("rgb_bands", c.rgb_bands);
        get("emit_hyper", c.emit_hyper);
        get("shared_endmembers", c.shared_endmembers);
        get("material_variability", c.material_variability);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("bad scene config value: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json prng_description() {
    return {{"name", CounterRng::kName},
            {"definition", "x_n = splitmix64_finalizer(key + n * 0x9e3779b97f4a7c15), key derived from (seed, stream, sub)"},
            {"scene_streams", "CounterRng(seed, scene_index, purpose)"}};
}

namespace {

/// Separable Gaussian blur with clamped edges.
std::vector<double> blur(const std::vector<double>& in, int w, int h, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        total += kernel[static_cast<std::size_t>(i + radius)];
    }
    for (double& k : kernel) k /= total;

    std::vector<double> tmp(in.size()), out(in.size());
    for (int row = 0; row < h; ++row) {
        const double* src = in.data() + static_cast<std::size_t>(row) * w;
        double* dst = tmp.data() + static_cast<std::size_t>(row) * w;
        for (int col = 0; col < w; ++col) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) s += kernel[static_cast<std::size_t>(i + radius)] * src[std::clamp(col + i, 0, w - 1)];
            dst[col] = s;
        }
    }
    std::vector<double> acc(static_cast<std::size_t>(w));
    for (int row = 0; row < h; ++row) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int i = -radius; i <= radius; ++i) {
            const double k = kernel[static_cast<std::size_t>(i + radius)];
            const double* src = tmp.data() + static_cast<std::size_t>(std::clamp(row + i, 0, h - 1)) * w;
            for (int col = 0; col < w; ++col) acc[static_cast<std::size_t>(col)] += k * src[col];
        }
        std::copy(acc.begin(), acc.end(), out.begin() + static_cast<std::ptrdiff_t>(row) * w);
    }
    return out;
}

void standardize(std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(v.size()));
    for (double& x : v) x = sd > 0.0 ? (x - mean) / sd : 0.0;
}

/// Smoothed random field mixing the base length scale with a 4x broader one.
std::vector<double> random_field(int w, int h, double length_scale, CounterRng& rng) {
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    std::vector<double> fine(n), broad(n);
    for (double& x : fine) x = rng.normal();
    for (double& x : broad) x = rng.normal();
    fine = blur(fine, w, h, length_scale);
    broad = blur(broad, w, h, 4.0 * length_scale);
    standardize(fine);
    standardize(broad);
    for (std::size_t i = 0; i < n; ++i) fine[i] += broad[i];
    standardize(fine);
    return fine;
}

}  // namespace

HyperScene gen_hyper_scene_detailed(const SceneConfig& cfg, std::uint64_t scene_index) {
    cfg.validate();
    const auto camera = cfg.camera();
    const int w = cfg.width;
    const int h = cfg.height;
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    const auto E = static_cast<std::size_t>(cfg.endmembers);
    const std::size_t K = camera.size();

    HyperScene scene;
    // Shared libraries draw from a stream no scene index can reach.
    CounterRng spectra_rng(cfg.seed, cfg.shared_endmembers ? ~std::uint64_t{0} : scene_index,
                           kSpectraStream);
    CounterRng jitter_rng(cfg.seed, scene_index, kVariabilityStream);
    const double jitter = cfg.shared_endmembers ? cfg.material_variability : 0.0;
    for (std::size_t e = 0; e < E; ++e) {
        const double baseline = spectra_rng.uniform(0.02, 0.12);
        const int peaks = 2 + static_cast<int>(spectra_rng.below(3));
        std::vector<double> c(static_cast<std::size_t>(peaks)), s(c.size()), a(c.size());
        for (int g = 0; g < peaks; ++g) {
            c[static_cast<std::size_t>(g)] = spectra_rng.uniform(cfg.wavelength_min_nm, cfg.wavelength_max_nm);
            s[static_cast<std::size_t>(g)] = spectra_rng.uniform(20.0, 150.0);
            a[static_cast<std::size_t>(g)] = spectra_rng.uniform(0.1, 0.6);
        }
        for (int g = 0; g < peaks; ++g) {
            a[static_cast<std::size_t>(g)] *= 1.0 + jitter * jitter_rng.uniform(-1.0, 1.0);
        }
        std::vector<double> spectrum(K);
        for (std::size_t k = 0; k < K; ++k) {
            double v = baseline;
            for (std::size_t g = 0; g < c.size(); ++g) {
                const double d = (camera.centers_nm[k] - c[g]) / s[g];
                v += a[g] * std::exp(-0.5 * d * d);
            }
            spectrum[k] = v;
        }
        const double peak = *std::max_element(spectrum.begin(), spectrum.end());
        if (peak > 0.9) {
            for (double& v : spectrum) v *= 0.9 / peak;
        }
        scene.endmember_spectra.push_back(std::move(spectrum));
    }

    // Abundance logits, one independent substream per endmember.
    std::vector<std::vector<double>> logits(E);
    parallel_for(E, [&](std::size_t e) {
        CounterRng rng(cfg.seed, scene_index, 0x100 + e);
        logits[e] = random_field(w, h, cfg.length_scale, rng);
    });
    scene.abundances.assign(E, std::vector<double>(n));
    auto& abund = scene.abundances;
    for (std::size_t p = 0; p < n; ++p) {
        double mx = -1e300;
        for (std::size_t e = 0; e < E; ++e) mx = std::max(mx, cfg.contrast * logits[e][p]);
        double total = 0.0;
        for (std::size_t e = 0; e < E; ++e) {
            abund[e][p] = std::exp(cfg.contrast * logits[e][p] - mx);
            total += abund[e][p];
        }
        for (std::size_t e = 0; e < E; ++e) abund[e][p] /= total;
    }
    logits.clear();

    std::vector<raster::BandInfo> infos;
    for (std::size_t k = 0; k < K; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "hs%03zu", k);
        infos.push_back({name, camera.centers_nm[k]});
    }
    scene.cube = raster::Raster(cfg.grid(), std::move(infos));
    parallel_for(K, [&](std::size_t k) {
        auto plane = scene.cube.band(k);
        for (std::size_t p = 0; p < n; ++p) {
            double v = 0.0;
            for (std::size_t e = 0; e < E; ++e) v += abund[e][p] * scene.endmember_spectra[e][k];
            plane[p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    });
    return scene;
}

raster::Raster gen_hyper_scene(const SceneConfig& cfg, std::uint64_t scene_index) {
    return std::move(gen_hyper_scene_detailed(cfg, scene_index).cube);
}

raster::Raster degrade(const raster::Raster& fine, const SceneConfig& cfg, std::uint64_t scene_index) {
    require(cfg.scale >= 1, ErrorKind::Config, "scale must be >= 1");
    require(cfg.noise_sigma >= 0.0, ErrorKind::Config, "noise sigma must be >= 0");
    const int s = cfg.scale;
    if (fine.width() % s != 0 || fine.height() % s != 0) {
        fail(ErrorKind::Geometry, "raster " + std::to_string(fine.width()) + "x" + std::to_string(fine.height()) +
                                      " is not divisible by scale " + std::to_string(s));
    }
    if (std::abs(cfg.shift_x) > fine.width() - s || std::abs(cfg.shift_y) > fine.height() - s) {
        fail(ErrorKind::Geometry, "injected shift (" + std::to_string(cfg.shift_x) + "," + std::to_string(cfg.shift_y) +
                                      ") leaves no complete coarse block inside the image");
    }
    const std::size_t B = fine.band_count();
    if (!cfg.gains.empty() && cfg.gains.size() != B) fail(ErrorKind::Config, "gains must list one value per band");
    if (!cfg.offsets.empty() && cfg.offsets.size() != B) fail(ErrorKind::Config, "offsets must list one value per band");

    // T(p) = F(p + shift), then block average.
    raster::Raster coarse = raster::block_mean(raster::translate(fine, -cfg.shift_x, -cfg.shift_y), s);
    const int cw = coarse.width();
    const int ch = coarse.height();
    for (int J = 0; J < ch; ++J) {
        for (int I = 0; I < cw; ++I) {
            const int c0 = I * s + cfg.shift_x;
            const int r0 = J * s + cfg.shift_y;
            const bool inside = c0 >= 0 && r0 >= 0 && c0 + s <= fine.width() && r0 + s <= fine.height();
            if (!inside) coarse.set_valid(J, I, false);
        }
    }

    CounterRng noise(cfg.seed, scene_index, kNoiseStream);
    for (std::size_t b = 0; b < B; ++b) {
        const double gain = cfg.gains.empty() ? 1.0 : cfg.gains[b];
        const double offset = cfg.offsets.empty() ? 0.0 : cfg.offsets[b];
        auto plane = coarse.band(b);
        for (std::size_t p = 0; p < plane.size(); ++p) {
            double v = plane[p];
            if (gain != 1.0 || offset != 0.0) v = gain * v + offset;
            if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * noise.normal();
            plane[p] = coarse.valid(p) ? static_cast<float>(std::clamp(v, 0.0, 1.0)) : 0.0f;
        }
    }
    return coarse;
}

std::string scene_site(std::size_t index) {
    return "site" + std::string(1, static_cast<char>('A' + index / 2 % 26));
}

std::string scene_date(std::size_t index) {
    return "t" + std::to_string(index % 2);
}

FusionScene make_fusion_scene(const SceneConfig& cfg, const spectral::BandWeights& weights, std::uint64_t scene_index,
                              bool keep_hyper) {
    char id[32];
    std::snprintf(id, sizeof id, "scene_%03llu", static_cast<unsigned long long>(scene_index));
    FusionScene scene;
    scene.id = id;
    scene.site = scene_site(scene_index);
    scene.date = scene_date(scene_index);
    raster::Raster cube = gen_hyper_scene(cfg, scene_index);
    scene.truth8 = spectral::simulate_bands(cube, weights);
    if (keep_hyper) scene.hyper = std::move(cube);
    cube = raster::Raster();

    const auto names = scene.truth8.band_names();
    std::vector<std::size_t> rgb_idx;
    for (const auto& want : cfg.rgb_bands) {
        const auto it = std::find(names.begin(), names.end(), want);
        if (it == names.end()) fail(ErrorKind::Config, "rgb band '" + want + "' is not among the simulated bands");
        rgb_idx.push_back(static_cast<std::size_t>(it - names.begin()));
    }
    scene.rgb = raster::select_bands(scene.truth8, rgb_idx);
    scene.coarse = degrade(scene.truth8, cfg, scene_index);
    scene.coarse_upsampled = raster::upsample_bicubic(scene.coarse, cfg.scale);
    return scene;
}

std::vector<std::string> default_splits(std::size_t n) {
    require(n >= 3, ErrorKind::Config, "a fusion dataset needs at least 3 scenes");
    const std::size_t n_test = std::max<std::size_t>(1, n / 4);
    const std::size_t n_val = std::max<std::size_t>(1, n / 8);
    std::vector<std::string> out(n, "train");
    for (std::size_t i = n - n_test; i < n; ++i) out[i] = "test";
    for (std::size_t i = n - n_test - n_val; i < n - n_test; ++i) out[i] = "val";
    return out;
}

nlohmann::json to_json(const DatasetManifest& m) {
    nlohmann::json scenes = nlohmann::json::array();
    for (const auto& s : m.scenes) {
        scenes.push_back({{"id", s.id},
                          {"split", s.split},
                          {"site", s.site},
                          {"date", s.date},
                          {"files",
                           {{"hyper", s.hyper ? nlohmann::json(s.hyper->generic_string()) : nlohmann::json(nullptr)},
                            {"truth8", s.truth8.generic_string()},
                            {"rgb", s.rgb.generic_string()},
                            {"coarse", s.coarse.generic_string()},
                            {"coarse_upsampled", s.coarse_upsampled.generic_string()}}}});
    }
    return {{"seed", m.seed},
            {"config", to_json(m.config)},
            {"prng", prng_description()},
            {"srf", m.srf.generic_string()},
            {"weights", m.weights.generic_string()},
            {"scenes", scenes}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base / path;
    };
    DatasetManifest m;
    try {
        m.seed = j.at("seed").get<std::uint64_t>();
        m.config = scene_config_from_json(j.at("config"));
        m.srf = resolve(j.at("srf").get<std::string>());
        m.weights = resolve(j.at("weights").get<std::string>());
        for (const auto& s : j.at("scenes")) {
            DatasetEntry e;
            e.id = s.at("id").get<std::string>();
            e.split = s.at("split").get<std::string>();
            e.site = s.value("site", "");
            e.date = s.value("date", "");
            const auto& f = s.at("files");
            if (!f.at("hyper").is_null()) e.hyper = resolve(f.at("hyper").get<std::string>());
            e.truth8 = resolve(f.at("truth8").get<std::string>());
            e.rgb = resolve(f.at("rgb").get<std::string>());
            e.coarse = resolve(f.at("coarse").get<std::string>());
            e.coarse_upsampled = resolve(f.at("coarse_upsampled").get<std::string>());
            m.scenes.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Validation, std::string("malformed manifest: ") + e.what());
    }
    return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes::read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Validation, "manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    return manifest_from_json(j, path.parent_path());
}

DatasetManifest make_fusion_dataset(const SceneConfig& cfg, std::size_t n_scenes, const std::filesystem::path& out_dir) {
    cfg.validate();
    const auto splits = default_splits(n_scenes);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + out_dir.string() + ": " + ec.message());

    const auto srf = spectral::approximate_sentinel2_vnir();
    const auto weights = spectral::fit_band_weights(srf, cfg.camera());
    spectral::write_srf_csv(srf, out_dir / "srf.csv");
    spectral::write_band_weights(weights, out_dir / "weights.json");

    DatasetManifest m;
    m.seed = cfg.seed;
    m.config = cfg;
    m.srf = "srf.csv";
    m.weights = "weights.json";
    m.scenes.resize(n_scenes);
    parallel_for(n_scenes, [&](std::size_t i) {
        FusionScene scene = make_fusion_scene(cfg, weights, i, cfg.emit_hyper);
        const std::filesystem::path rel(scene.id);
        std::filesystem::create_directories(out_dir / rel);
        DatasetEntry& e = m.scenes[i];
        e.id = scene.id;
        e.split = splits[i];
        e.site = scene.site;
        e.date = scene.date;
        if (scene.hyper) {
            e.hyper = rel / "hyper.bsf";
            raster::write_bsf(*scene.hyper, out_dir / *e.hyper);
        }
        e.truth8 = rel / "truth8.bsf";
        e.rgb = rel / "rgb.bsf";
        e.coarse = rel / "coarse.bsf";
        e.coarse_upsampled = rel / "coarse_upsampled.bsf";
        raster::write_bsf(scene.truth8, out_dir / e.truth8);
        raster::write_bsf(scene.rgb, out_dir / e.rgb);
        raster::write_bsf(scene.coarse, out_dir / e.coarse);
        raster::write_bsf(scene.coarse_upsampled, out_dir / e.coarse_upsampled);
    });
    bytes::write_text(out_dir / "manifest.json", to_json(m).dump(2) + "\n");
    return m;
}

std::vector<rf::Quadrat> make_field_quadrats(const raster::Raster& truth8, const FieldConfig& cfg) {
    require(cfg.side_m > 0.0, ErrorKind::Config, "quadrat side must be positive");
    const auto names = truth8.band_names();
    auto index_of = [&](const std::string& n) {
        const auto it = std::find(names.begin(), names.end(), n);
        if (it == names.end()) fail(ErrorKind::Config, "band '" + n + "' not in raster");
        return static_cast<std::size_t>(it - names.begin());
    };
    const std::size_t nir = index_of(cfg.nir_band);
    const std::size_t red = index_of(cfg.red_band);
    const auto& g = truth8.grid();
    const double w = g.width * g.pixel_w;
    const double h = g.height * g.pixel_h;
    require(w > 2 * cfg.side_m && h > 2 * cfg.side_m, ErrorKind::Geometry, "raster too small for quadrats");

    CounterRng rng(cfg.seed, 0, kFieldStream);
    std::vector<rf::Quadrat> quadrats;
    for (std::size_t i = 0; i < cfg.n; ++i) {
        rf::Quadrat q;
        q.id = "q" + std::to_string(i);
        q.x_m = g.origin_x + rng.uniform(cfg.side_m, w - cfg.side_m);
        q.y_m = g.origin_y - rng.uniform(cfg.side_m, h - cfg.side_m);
        q.side_m = cfg.side_m;
        quadrats.push_back(q);
    }
    const auto samples = rf::extract_quadrat_features(truth8, quadrats);
    for (std::size_t i = 0; i < quadrats.size(); ++i) {
        const auto& f = samples[i].features;
        quadrats[i].target = 10.0 * f[nir] - 4.0 * f[red] + cfg.noise_sigma * rng.normal();
    }
    return quadrats;
}

nlohmann::json to_json(const FieldConfig& c) {
    return {{"n", c.n},
            {"side_m", c.side_m},
            {"seed", c.seed},
            {"noise_sigma", c.noise_sigma},
            {"nir_band", c.nir_band},
            {"red_band", c.red_band}};
}

FieldConfig field_config_from_json(const nlohmann::json& j) {
    FieldConfig c;
    require(j.is_object(), ErrorKind::Config, "field config must be a JSON object");
    const auto defaults = to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (!defaults.contains(key)) fail(ErrorKind::Config, "unknown field config key '" + key + "'");
    }
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("n", c.n);
        get("side_m", c.side_m);
        get("seed", c.seed);
        get("noise_sigma", c.noise_sigma);
        get("nir_band", c.nir_band);
        get("red_band", c.red_band);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("bad field config value: ") + e.what());
    }
    require(c.n >= 1 && c.side_m > 0.0 && c.noise_sigma >= 0.0, ErrorKind::Config, "field config values out of range");
    return c;
}

}  // namespace agfuse::synth
