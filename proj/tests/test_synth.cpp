#include <doctest.h>

#include <cmath>
#include <set>

#include "agfuse/bytes.hpp"
#include "agfuse/error.hpp"
#include "agfuse/raster/bsf.hpp"
#include "agfuse/raster/resample.hpp"
#include "agfuse/spectral/spectral.hpp"
#include "agfuse/synth/synth.hpp"
#include "support/fixtures.hpp"
#include "support/scenes.hpp"

using namespace agfuse;

TEST_CASE("one endmember gives a spatially constant cube") {
    auto cfg = testing::small_scene(4, 8, 3);
    cfg.endmembers = 1;
    const auto cube = synth::gen_hyper_scene(cfg);
    for (std::size_t b = 0; b < cube.band_count(); ++b) {
        const auto plane = cube.band(b);
        for (float v : plane) CHECK(v == plane[0]);
    }
}

TEST_CASE("abundances lie on the simplex and cube values in [0,1]") {
    auto cfg = testing::small_scene(8, 8, 4);
    const auto scene = synth::gen_hyper_scene_detailed(cfg);
    REQUIRE(scene.abundances.size() == static_cast<std::size_t>(cfg.endmembers));
    double worst = 0.0;
    for (std::size_t p = 0; p < scene.cube.pixel_count(); ++p) {
        double s = 0.0;
        for (const auto& a : scene.abundances) {
            CHECK(a[p] >= 0.0);
            s += a[p];
        }
        worst = std::max(worst, std::abs(s - 1.0));
    }
    CHECK(worst <= 1e-9);
    for (float v : scene.cube.values()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    const auto camera = cfg.camera();
    for (std::size_t k = 0; k < scene.cube.band_count(); ++k) {
        CHECK(scene.cube.bands()[k].wavelength_nm.value() == camera.centers_nm[k]);
    }
    // Pixel spectrum is the abundance-weighted endmember mixture.
    const std::size_t p = 1234;
    for (std::size_t k = 0; k < scene.cube.band_count(); ++k) {
        double v = 0.0;
        for (std::size_t e = 0; e < scene.abundances.size(); ++e) v += scene.abundances[e][p] * scene.endmember_spectra[e][k];
        CHECK(scene.cube.band(k)[p] == doctest::Approx(v).epsilon(1e-6));
    }
}

TEST_CASE("same seed gives a bit-identical cube, a different seed does not") {
    auto cfg = testing::small_scene(6, 8, 5);
    cfg.bands = 40;
    const auto a = synth::gen_hyper_scene(cfg);
    const auto b = synth::gen_hyper_scene(cfg);
    CHECK(raster::bit_identical(a, b));
    CHECK_FALSE(raster::bit_identical(a, synth::gen_hyper_scene(cfg, 1)));
    cfg.seed = 6;
    CHECK_FALSE(raster::bit_identical(a, synth::gen_hyper_scene(cfg)));
}

TEST_CASE("material library is shared across scenes up to the per-scene jitter") {
    auto cfg = testing::small_scene(2, 8, 6);
    cfg.material_variability = 0.0;
    const auto a = synth::gen_hyper_scene_detailed(cfg, 0);
    const auto b = synth::gen_hyper_scene_detailed(cfg, 1);
    CHECK(a.endmember_spectra == b.endmember_spectra);
    CHECK(a.abundances != b.abundances);

    cfg.material_variability = 0.2;
    const auto c = synth::gen_hyper_scene_detailed(cfg, 0);
    const auto d = synth::gen_hyper_scene_detailed(cfg, 1);
    CHECK(c.endmember_spectra != d.endmember_spectra);
    // Jitter only rescales peak amplitudes, so spectra stay close.
    double worst = 0.0;
    for (std::size_t e = 0; e < c.endmember_spectra.size(); ++e)
        for (std::size_t k = 0; k < c.endmember_spectra[e].size(); ++k)
            worst = std::max(worst, std::abs(c.endmember_spectra[e][k] - a.endmember_spectra[e][k]));
    CHECK(worst > 0.0);
    CHECK(worst < 0.5);

    cfg.shared_endmembers = false;
    const auto e0 = synth::gen_hyper_scene_detailed(cfg, 0);
    const auto e1 = synth::gen_hyper_scene_detailed(cfg, 1);
    CHECK(e0.endmember_spectra != e1.endmember_spectra);

    cfg.material_variability = 1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("noise-free unshifted degrade equals block_mean exactly") {
    const auto cfg = testing::small_scene(8, 8, 7);
    const auto fine = synth::gen_hyper_scene(cfg);
    CHECK(raster::bit_identical(synth::degrade(fine, cfg), raster::block_mean(fine, 8)));
}

TEST_CASE("degrade shift convention and invalid border blocks") {
    auto cfg = testing::small_scene(8, 8, 8);
    const auto fine = synth::gen_hyper_scene(cfg);
    cfg.shift_x = 8;
    cfg.shift_y = -8;
    const auto coarse = synth::degrade(fine, cfg);
    const auto ref = raster::block_mean(fine, 8);
    // Coarse (J, I) averages the fine block one cell right and one cell up.
    for (int J = 1; J < 8; ++J)
        for (int I = 0; I < 7; ++I) CHECK(coarse.at(2, J, I) == ref.at(2, J - 1, I + 1));
    for (int J = 0; J < 8; ++J) CHECK_FALSE(coarse.valid(J, 7));
    for (int I = 0; I < 8; ++I) CHECK_FALSE(coarse.valid(0, I));
    CHECK(coarse.valid(1, 0));
}

TEST_CASE("degrade gain, offset and noise statistics") {
    auto cfg = testing::small_scene(128, 2, 9);
    cfg.length_scale = 6.0;
    const auto fine = synth::gen_hyper_scene(cfg);
    const auto clean = synth::degrade(fine, cfg);
    cfg.noise_sigma = 0.01;
    const auto noisy = synth::degrade(fine, cfg);
    for (std::size_t b = 0; b < fine.band_count(); ++b) {
        const auto x = clean.band(b), y = noisy.band(b);
        double m = 0.0, m2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = static_cast<double>(y[i]) - x[i];
            m += d;
            m2 += d * d;
        }
        const double n = static_cast<double>(x.size());
        const double var = (m2 - m * m / n) / (n - 1);
        CHECK(n >= 1e4);
        CHECK(var == doctest::Approx(1e-4).epsilon(0.10));
    }
    cfg.noise_sigma = 0.0;
    cfg.gains.assign(8, 0.5);
    cfg.offsets.assign(8, 0.1);
    const auto affine = synth::degrade(fine, cfg);
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK(affine.values()[i] == static_cast<float>(0.5 * clean.values()[i] + 0.1));
    }
}

TEST_CASE("degrade geometry errors") {
    auto cfg = testing::small_scene(4, 8, 10);
    const auto fine = synth::gen_hyper_scene(cfg);
    cfg.shift_x = 40;
    CHECK(testing::kind_of([&] { synth::degrade(fine, cfg); }) == ErrorKind::Geometry);
    cfg.shift_x = 0;
    cfg.scale = 5;
    CHECK(testing::kind_of([&] { synth::degrade(fine, cfg); }) == ErrorKind::Geometry);
}

TEST_CASE("scene config JSON round trip rejects unknown keys") {
    synth::SceneConfig cfg;
    cfg.seed = 99;
    cfg.noise_sigma = 0.02;
    cfg.gains = {1.0, 1.1};
    const auto j = synth::to_json(cfg);
    CHECK(synth::to_json(synth::scene_config_from_json(j)) == j);
    auto bad = j;
    bad["colour"] = 1;
    CHECK(testing::kind_of([&] { synth::scene_config_from_json(bad); }) == ErrorKind::Config);
    auto odd = j;
    odd["width"] = 645;
    CHECK(testing::kind_of([&] { synth::scene_config_from_json(odd); }) == ErrorKind::Config);
}

TEST_CASE("fusion dataset products, splits and determinism") {
    synth::SceneConfig cfg;
    cfg.width = 64;
    cfg.height = 64;
    cfg.emit_hyper = true;
    const auto dir_a = testing::scratch_dir("synth_a");
    const auto dir_b = testing::scratch_dir("synth_b");
    const auto m = synth::make_fusion_dataset(cfg, 4, dir_a);
    synth::make_fusion_dataset(cfg, 4, dir_b);
    CHECK(bytes::read_text(dir_a / "manifest.json") == bytes::read_text(dir_b / "manifest.json"));

    const auto back = synth::read_manifest(dir_a / "manifest.json");
    REQUIRE(back.scenes.size() == 4);
    std::set<std::string> ids;
    std::map<std::string, int> per_split;
    for (const auto& s : back.scenes) {
        ids.insert(s.id);
        ++per_split[s.split];
    }
    CHECK(ids.size() == 4);
    CHECK(per_split["train"] + per_split["val"] + per_split["test"] == 4);
    CHECK(per_split["train"] >= 1);
    CHECK(per_split["val"] >= 1);
    CHECK(per_split["test"] >= 1);

    const auto weights = spectral::read_band_weights(back.weights);
    for (const auto& s : back.scenes) {
        REQUIRE(s.hyper.has_value());
        const auto cube = raster::read_bsf(*s.hyper);
        const auto truth = raster::read_bsf(s.truth8);
        CHECK(raster::bit_identical(truth, spectral::simulate_bands(cube, weights)));
        const auto coarse = raster::read_bsf(s.coarse);
        CHECK(raster::bit_identical(coarse, raster::block_mean(truth, 8)));
        const auto up = raster::read_bsf(s.coarse_upsampled);
        CHECK(up.grid() == truth.grid());
        const auto rgb = raster::read_bsf(s.rgb);
        CHECK(rgb.band_names() == std::vector<std::string>{"B4", "B3", "B2"});
        CHECK(bytes::read_file(s.truth8) == bytes::read_file(dir_b / std::filesystem::relative(s.truth8, dir_a)));
    }
    CHECK(testing::kind_of([&] { synth::make_fusion_dataset(cfg, 2, dir_a); }) == ErrorKind::Config);
}

TEST_CASE("field quadrats follow the NIR-driven target") {
    auto cfg = testing::small_scene(16, 8, 12);
    auto cube = synth::gen_hyper_scene(cfg);
    std::vector<std::string> names = {"B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A"};
    for (std::size_t b = 0; b < 8; ++b) cube.bands()[b].name = names[b];
    synth::FieldConfig fc;
    fc.n = 30;
    fc.noise_sigma = 0.0;
    const auto qs = synth::make_field_quadrats(cube, fc);
    REQUIRE(qs.size() == 30);
    const auto samples = rf::extract_quadrat_features(cube, qs);
    for (std::size_t i = 0; i < qs.size(); ++i) {
        CHECK(qs[i].target == doctest::Approx(10.0 * samples[i].features[6] - 4.0 * samples[i].features[2]));
    }
    const auto again = synth::make_field_quadrats(cube, fc);
    CHECK(again[7].x_m == qs[7].x_m);
}
