#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "agfuse/bytes.hpp"
#include "agfuse/metrics/metrics.hpp"
#include "agfuse/nn/srcnn.hpp"
#include "agfuse/raster/bsf.hpp"
#include "agfuse/raster/resample.hpp"
#include "agfuse/spectral/spectral.hpp"
#include "agfuse/synth/synth.hpp"
#include "support/fixtures.hpp"
#include "support/scenes.hpp"

using namespace agfuse;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

/// Runs the CLI from `cwd`, capturing both streams.
Run cli(const std::string& args, const fs::path& cwd) {
    const fs::path out = cwd / "stdout.txt";
    const fs::path err = cwd / "stderr.txt";
    const std::string cmd = "cd '" + cwd.string() + "' && '" AGFUSE_CLI "' " + args + " > '" + out.string() +
                            "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = bytes::read_text(out);
    r.err = bytes::read_text(err);
    return r;
}

void write(const fs::path& p, const std::string& text) { bytes::write_text(p, text); }

}  // namespace

TEST_CASE("usage errors exit 1 with usage text on stderr") {
    const auto dir = testing::scratch_dir("cli_usage");
    auto r = cli("", dir);
    CHECK(r.code == 1);
    CHECK(r.err.find("Usage") != std::string::npos);
    r = cli("frobnicate", dir);
    CHECK(r.code == 1);
    CHECK(r.err.find("Usage") != std::string::npos);
    r = cli("evaluate --pred a.bsf --truth b.bsf --bogus", dir);
    CHECK(r.code == 1);
    r = cli("evaluate --pred a.bsf", dir);
    CHECK(r.code == 1);
    r = cli("--help", dir);
    CHECK(r.code == 0);
    CHECK(r.out.find("gen-synthetic") != std::string::npos);
}

TEST_CASE("fit-srf writes one weight entry per Sentinel-2 VNIR band") {
    const auto dir = testing::scratch_dir("cli_fit_srf");
    spectral::write_srf_csv(spectral::approximate_sentinel2_vnir(), dir / "srf.csv");
    const auto r = cli("fit-srf --srf srf.csv --camera default269 --out weights.json", dir);
    REQUIRE(r.code == 0);
    const auto w = spectral::read_band_weights(dir / "weights.json");
    REQUIRE(w.bands.size() == 8);
    std::vector<std::string> names;
    for (const auto& b : w.bands) names.push_back(b.name);
    CHECK(names == spectral::sentinel2_vnir_bands());
    CHECK(json::parse(r.out).at("band_count") == 8);
    // Structured log line names the stage.
    CHECK(json::parse(r.err.substr(0, r.err.find('\n'))).at("stage") == "fit-srf");
}

TEST_CASE("evaluate on identical files reports rmse 0 and the PSNR cap flag") {
    const auto dir = testing::scratch_dir("cli_evaluate");
    raster::write_bsf(testing::random_raster(16, 12, 3, 5), dir / "p.bsf");
    fs::copy_file(dir / "p.bsf", dir / "t.bsf");
    const auto r = cli("evaluate --pred p.bsf --truth t.bsf --out m.json", dir);
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j.at("rmse") == 0.0);
    CHECK(j.at("psnr_capped") == true);
    CHECK(j.at("psnr") == metrics::kPsnrCapDb);
    CHECK(json::parse(bytes::read_text(dir / "m.json")) == j);
}

TEST_CASE("I/O failures exit 2, validation failures exit 1") {
    const auto dir = testing::scratch_dir("cli_exit_codes");
    CHECK(cli("evaluate --pred missing.bsf --truth missing.bsf", dir).code == 2);

    raster::write_bsf(testing::random_raster(8, 8, 2, 1), dir / "a.bsf");
    auto bytes_ = bytes::read_file(dir / "a.bsf");
    bytes_.resize(bytes_.size() / 2);
    bytes::write_file(dir / "trunc.bsf", bytes_);
    CHECK(cli("evaluate --pred trunc.bsf --truth a.bsf", dir).code == 2);

    raster::write_bsf(testing::random_raster(8, 8, 3, 1), dir / "b.bsf");
    const auto mismatch = cli("evaluate --pred a.bsf --truth b.bsf", dir);
    CHECK(mismatch.code == 1);
    CHECK(mismatch.err.find("\"stage\":\"error\"") != std::string::npos);

    write(dir / "unknown.json", R"({"version": 1, "scene": {"width": 64}, "colour": 3})");
    CHECK(cli("gen-synthetic --out g --config unknown.json", dir).code == 1);
    write(dir / "noversion.json", R"({"scenes": 3})");
    CHECK(cli("gen-synthetic --out g --config noversion.json", dir).code == 1);
    write(dir / "badscene.json", R"({"version": 1, "scene": {"widht": 64}})");
    CHECK(cli("gen-synthetic --out g --config badscene.json", dir).code == 1);
    write(dir / "notjson.json", "{version: 1");
    CHECK(cli("gen-synthetic --out g --config notjson.json", dir).code == 1);
}

TEST_CASE("gen-synthetic twice with the same seed gives identical manifests") {
    const auto dir = testing::scratch_dir("cli_gen");
    REQUIRE(cli("--threads 1 gen-synthetic --seed 7 --out a/", dir).code == 0);
    REQUIRE(cli("gen-synthetic --seed 7 --out b/", dir).code == 0);
    const auto ma = bytes::read_text(dir / "a" / "manifest.json");
    CHECK(ma == bytes::read_text(dir / "b" / "manifest.json"));
    const auto m = synth::read_manifest(dir / "a" / "manifest.json");
    CHECK(m.scenes.size() == 8);
    for (std::size_t i = 0; i < m.scenes.size(); ++i) {
        const auto& e = m.scenes[i];
        CHECK(raster::bit_identical(raster::read_bsf(e.truth8), raster::read_bsf(dir / "b" / e.id / "truth8.bsf")));
    }
    CHECK(bytes::read_text(dir / "a" / "quadrats.csv") == bytes::read_text(dir / "b" / "quadrats.csv"));
}

TEST_CASE("register then align --apply-shift removes an injected shift") {
    const auto dir = testing::scratch_dir("cli_register");
    auto cfg = testing::small_scene(12, 8, 21);
    const auto fine = synth::gen_hyper_scene(cfg);
    cfg.shift_x = 8;
    cfg.shift_y = -4;
    const auto coarse = synth::degrade(fine, cfg);
    raster::write_bsf(fine, dir / "fine.bsf");
    raster::write_bsf(coarse, dir / "coarse.bsf");

    REQUIRE(cli("align --fine fine.bsf --coarse coarse.bsf --out snapped.bsf", dir).code == 0);
    CHECK(raster::bit_identical(raster::read_bsf(dir / "snapped.bsf"), fine));
    REQUIRE(cli("register --fine snapped.bsf --coarse coarse.bsf --out shift.json", dir).code == 0);
    const auto s = json::parse(bytes::read_text(dir / "shift.json"));
    CHECK(s.at("shift_px") == json::array({-8, 4}));
    CHECK(s.at("shift_m") == json::array({-8 * cfg.pixel_m, 4 * cfg.pixel_m}));

    REQUIRE(cli("align --fine fine.bsf --coarse coarse.bsf --apply-shift shift.json --out shifted.bsf", dir).code == 0);
    REQUIRE(cli("register --fine shifted.bsf --coarse coarse.bsf --out again.json", dir).code == 0);
    CHECK(json::parse(bytes::read_text(dir / "again.json")).at("shift_px") == json::array({0, 0}));

    write(dir / "reg.json", R"({"version": 1, "coarse_stride": 4, "refine_radius": 4})");
    REQUIRE(cli("register --fine snapped.bsf --coarse coarse.bsf --config reg.json --out s2.json", dir).code == 0);
    CHECK(json::parse(bytes::read_text(dir / "s2.json")).at("shift_px") == json::array({-8, 4}));
    write(dir / "reg_bad.json", R"({"version": 1, "stride": 4})");
    CHECK(cli("register --fine snapped.bsf --coarse coarse.bsf --config reg_bad.json --out s3.json", dir).code == 1);
}

TEST_CASE("simulate applies fitted weights to a cube") {
    const auto dir = testing::scratch_dir("cli_simulate");
    auto cfg = testing::small_scene(2, 8, 4);
    cfg.bands = 269;
    cfg.fwhm_nm = 6.0;
    const auto cube = synth::gen_hyper_scene(cfg);
    raster::write_bsf(cube, dir / "cube.bsf");
    spectral::write_srf_csv(spectral::approximate_sentinel2_vnir(), dir / "srf.csv");
    REQUIRE(cli("fit-srf --srf srf.csv --out w.json", dir).code == 0);
    REQUIRE(cli("simulate --cube cube.bsf --weights w.json --out s.bsf", dir).code == 0);
    const auto expect = spectral::simulate_bands(cube, spectral::read_band_weights(dir / "w.json"));
    CHECK(raster::bit_identical(raster::read_bsf(dir / "s.bsf"), expect));
}

TEST_CASE("rf-cv is identical across runs and worker counts; rf-fit reports OOB R2") {
    const auto dir = testing::scratch_dir("cli_rf");
    auto cfg = testing::small_scene(8, 8, 9);
    cfg.rgb_bands = {"B4", "B3", "B2"};
    const auto w = spectral::fit_band_weights(spectral::approximate_sentinel2_vnir(), cfg.camera());
    raster::write_bsf(spectral::simulate_bands(synth::gen_hyper_scene(cfg), w), dir / "truth8.bsf");
    synth::FieldConfig field;
    field.n = 60;
    const auto quadrats = synth::make_field_quadrats(raster::read_bsf(dir / "truth8.bsf"), field);
    rf::write_quadrats_csv(quadrats, dir / "q.csv");
    write(dir / "rf.json", R"({"version": 1, "forest": {"n_trees": 40}, "seed": 5, "k": 4})");

    const std::string args = "rf-cv --raster truth8.bsf --quadrats q.csv --config rf.json";
    REQUIRE(cli("--threads 1 " + args + " --out cv1.json", dir).code == 0);
    REQUIRE(cli("--threads 3 " + args + " --out cv2.json", dir).code == 0);
    CHECK(bytes::read_text(dir / "cv1.json") == bytes::read_text(dir / "cv2.json"));
    const auto cv = json::parse(bytes::read_text(dir / "cv1.json"));
    CHECK(cv.at("k") == 4);
    CHECK(cv.at("feature_names").size() == 8);

    REQUIRE(cli(args + " --bands B4,B3,B2 --out cv_rgb.json", dir).code == 0);
    CHECK(json::parse(bytes::read_text(dir / "cv_rgb.json")).at("feature_names") == json::array({"B4", "B3", "B2"}));
    CHECK(cli(args + " --bands B99 --out x.json", dir).code == 1);

    const auto fit = cli("rf-fit --raster truth8.bsf --quadrats q.csv --trees 30 --seed 2 --out model.json", dir);
    REQUIRE(fit.code == 0);
    const auto summary = json::parse(fit.out);
    CHECK(summary.at("samples") == 60);
    CHECK(summary.at("oob_r2").is_number());
    const auto model = json::parse(bytes::read_text(dir / "model.json"));
    CHECK(rf::forest_from_json(model.at("model")).trees.size() == 30);
}

TEST_CASE("pipeline runs every stage from one config with config-relative paths") {
    const auto dir = testing::scratch_dir("cli_pipeline");
    fs::create_directories(dir / "cfg");
    fs::create_directories(dir / "elsewhere");
    write(dir / "cfg" / "p.json", R"({
        "version": 1, "workdir": "../run", "seed": 3, "scenes": 4,
        "scene": {"width": 128, "height": 128, "bands": 60},
        "field": {"n": 40},
        "train": {"max_steps": 4, "eval_every": 2},
        "rf": {"forest": {"n_trees": 10}, "k": 3}})");
    const auto r = cli("pipeline --config ../cfg/p.json", dir / "elsewhere");
    REQUIRE(r.code == 0);
    const auto summary = json::parse(bytes::read_text(dir / "run" / "summary.json"));
    for (const char* stage : {"gen", "fit-srf", "simulate", "align", "register", "train", "infer", "evaluate", "rf-cv"})
        CHECK(summary.contains(stage));
    CHECK(summary.at("fit-srf").at("max_weight_diff") == 0.0);
    CHECK(summary.at("simulate").at("max_abs_diff_vs_truth") == 0.0);
    CHECK(summary.at("register").at("shift_px") == json::array({0, 0}));
    CHECK(summary.at("train").at("spectral").at("parameter_count") == 114728);
    CHECK(fs::exists(dir / "run" / "models" / "spectral-rgb.src"));
    CHECK(summary.at("rf-cv").contains("truth8"));

    // Stage subset that reuses earlier outputs; the CLI infer matches it.
    const auto m = synth::read_manifest(dir / "run" / "data" / "manifest.json");
    const auto& test_scene = m.scenes.back();
    const auto pred = dir / "run" / "pred" / "spectral" / (test_scene.id + ".bsf");
    const auto again = cli("infer --model ../run/models/spectral.src --rgb " + test_scene.rgb.string() +
                               " --coarse-up " + test_scene.coarse_upsampled.string() + " --out p.bsf",
                           dir / "elsewhere");
    REQUIRE(again.code == 0);
    CHECK(raster::bit_identical(raster::read_bsf(dir / "elsewhere" / "p.bsf"), raster::read_bsf(pred)));

    write(dir / "cfg" / "order.json", R"({"version": 1, "workdir": "../run", "stages": ["evaluate", "infer"]})");
    CHECK(cli("pipeline --config ../cfg/order.json", dir / "elsewhere").code == 1);
    write(dir / "cfg" / "eval.json", R"({"version": 1, "workdir": "../run", "stages": ["evaluate"]})");
    CHECK(cli("pipeline --config ../cfg/eval.json", dir / "elsewhere").code == 0);
}

TEST_CASE("train and infer subcommands write a loadable checkpoint and loss log") {
    const auto dir = testing::scratch_dir("cli_train");
    write(dir / "g.json", R"({"version": 1, "scenes": 4, "scene": {"width": 64, "height": 64, "bands": 40}})");
    REQUIRE(cli("gen-synthetic --config g.json --out data", dir).code == 0);
    write(dir / "t.json", R"({"version": 1, "train": {"max_steps": 3, "eval_every": 1, "patch_coarse": 2}, "model_seed": 4})");
    const auto r = cli("train --manifest data/manifest.json --preset spectral-rgb --recipe harness --config t.json --out m.src", dir);
    REQUIRE(r.code == 0);
    const auto model = nn::load_checkpoint(dir / "m.src");
    CHECK(model.seed == 4);
    CHECK(model.arch.in_channels == 3);
    CHECK(model.train_meta.at("input_layout") == "rgb");
    CHECK(model.train_meta.at("steps") == 3);
    const auto log = bytes::read_text(dir / "m.src.loss.csv");
    CHECK(log.rfind("step,epoch,train_loss,val_loss\n", 0) == 0);
    CHECK(std::count(log.begin(), log.end(), '\n') == 4);

    CHECK(cli("infer --model m.src --out p.bsf", dir).code == 1);
    REQUIRE(cli("infer --model m.src --rgb data/scene_003/rgb.bsf --out p.bsf", dir).code == 0);
    CHECK(raster::read_bsf(dir / "p.bsf").band_names() == spectral::sentinel2_vnir_bands());
    write(dir / "t_bad.json", R"({"version": 1, "train": {"learning_rate": 1e-3, "momentum": 0.9}})");
    CHECK(cli("train --manifest data/manifest.json --config t_bad.json --out x.src", dir).code == 1);
}
