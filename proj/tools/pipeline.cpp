#include <algorithm>
#include <cmath>
#include <memory>

#include "agfuse/align/align.hpp"
#include "agfuse/bytes.hpp"
#include "agfuse/fusion/fusion.hpp"
#include "agfuse/metrics/metrics.hpp"
#include "agfuse/raster/bsf.hpp"
#include "cli.hpp"

namespace agfuse::cli {

namespace {

const std::vector<std::string>& stage_order() {
    static const std::vector<std::string> s = {"gen",   "fit-srf", "simulate", "align",  "register",
                                               "train", "infer",   "evaluate", "rf-cv"};
    return s;
}

struct Pipeline {
    RunConfig cfg;
    fs::path work;
    synth::SceneConfig scene;
    synth::FieldConfig field;
    std::size_t n_scenes = 8;
    std::vector<std::string> presets;
    nn::TrainConfig train;
    std::uint64_t model_seed = 1;
    align::RegisterOptions reg;
    nn::InferOptions infer;
    RfSettings rf;
    json summary = json::object();

    fs::path data() const { return work / "data"; }
    fs::path model_path(const std::string& preset) const { return work / "models" / (preset + ".src"); }
    fs::path pred_path(const std::string& preset, const std::string& id) const {
        return work / "pred" / preset / (id + ".bsf");
    }

    synth::DatasetManifest manifest() const { return synth::read_manifest(data() / "manifest.json"); }

    /// First test scene: the field survey and the alignment demo use it.
    std::size_t survey_index(const synth::DatasetManifest& m) const {
        for (std::size_t i = 0; i < m.scenes.size(); ++i)
            if (m.scenes[i].split == "test") return i;
        fail(ErrorKind::Data, "manifest has no test scene");
    }

    void run(const std::string& stage);
};

Pipeline load_pipeline(const fs::path& path) {
    Pipeline p;
    p.cfg = RunConfig::load(path);
    const auto& c = p.cfg;
    c.allow({"workdir", "seed", "scenes", "scene", "field", "presets", "recipe", "train", "model_seed", "register",
             "infer", "rf", "stages"});
    p.work = c.has("workdir") ? c.path("workdir") : c.resolve("run");
    p.scene = synth::scene_config_from_json(c.section("scene"));
    if (c.has("seed")) p.scene.seed = c.get<std::uint64_t>("seed", p.scene.seed);
    p.field = synth::field_config_from_json(c.section("field"));
    p.n_scenes = c.get<std::size_t>("scenes", p.n_scenes);
    p.presets = c.get<std::vector<std::string>>("presets", {"spectral", "spectral-rgb"});
    for (const auto& preset : p.presets) fusion::layout_for_preset(preset);
    const auto recipe = c.get<std::string>("recipe", "harness");
    require(recipe == "harness" || recipe == "default", ErrorKind::Config, "recipe must be harness or default");
    auto merged = nn::to_json(recipe == "harness" ? fusion::harness_train_config() : nn::TrainConfig{});
    merged.update(c.section("train"));
    p.train = nn::train_config_from_json(merged);
    p.model_seed = c.get<std::uint64_t>("model_seed", p.model_seed);
    p.reg = align::register_options_from_json(c.section("register"));
    const auto inf = c.section("infer");
    for (const auto& [key, value] : inf.items()) {
        require(key == "tile" || key == "overlap" || key == "float64", ErrorKind::Config,
                "unknown infer option '" + key + "'");
    }
    p.infer.tile = inf.value("tile", p.infer.tile);
    p.infer.overlap = inf.value("overlap", p.infer.overlap);
    p.infer.float64 = inf.value("float64", p.infer.float64);
    if (c.has("rf")) {
        auto rf_doc = c.section("rf");
        rf_doc["version"] = kConfigVersion;
        const auto rc = RunConfig::from_json(rf_doc, p.work);
        rc.allow({"forest", "seed", "k"});
        p.rf.forest = rf::forest_config_from_json(rc.section("forest"));
        p.rf.seed = rc.get<std::uint64_t>("seed", p.rf.seed);
        p.rf.k = rc.get<int>("k", p.rf.k);
    }
    return p;
}

std::vector<std::string> selected_stages(const RunConfig& c) {
    const auto& order = stage_order();
    if (!c.has("stages")) return order;
    const auto stages = c.get<std::vector<std::string>>("stages", {});
    std::size_t last = 0;
    bool first = true;
    for (const auto& s : stages) {
        const auto it = std::find(order.begin(), order.end(), s);
        require(it != order.end(), ErrorKind::Config, "unknown pipeline stage '" + s + "'");
        const auto pos = static_cast<std::size_t>(it - order.begin());
        require(first || pos > last, ErrorKind::Config, "pipeline stages must follow the order gen, fit-srf, simulate, "
                                                        "align, register, train, infer, evaluate, rf-cv");
        last = pos;
        first = false;
    }
    return stages;
}

double max_abs_diff(const raster::Raster& a, const raster::Raster& b) {
    require(a.values().size() == b.values().size(), ErrorKind::Alignment, "rasters differ in size");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a.values()[i]) - b.values()[i]));
    return worst;
}

void Pipeline::run(const std::string& stage) {
    StageTimer t(stage);
    json out = json::object();
    if (stage == "gen") {
        out = generate_dataset(scene, n_scenes, field, data());
    } else if (stage == "fit-srf") {
        const auto m = manifest();
        const auto w = spectral::fit_band_weights(spectral::read_srf_csv(m.srf), m.config.camera());
        spectral::write_band_weights(w, work / "weights.json");
        const auto ref = spectral::read_band_weights(m.weights);
        double worst = 0.0;
        for (std::size_t b = 0; b < w.bands.size(); ++b)
            for (std::size_t k = 0; k < w.bands[b].weights.size(); ++k)
                worst = std::max(worst, std::abs(w.bands[b].weights[k] - ref.bands[b].weights[k]));
        out = {{"bands", w.bands.size()}, {"active_union", w.active_union_count()}, {"max_weight_diff", worst}};
    } else if (stage == "simulate") {
        const auto m = manifest();
        const auto i = survey_index(m);
        const auto& e = m.scenes[i];
        const auto sim = spectral::simulate_bands(synth::gen_hyper_scene(m.config, i),
                                                  spectral::read_band_weights(work / "weights.json"));
        const fs::path dst = work / "simulated" / (e.id + ".bsf");
        ensure_parent(dst);
        raster::write_bsf(sim, dst);
        out = {{"scene", e.id}, {"max_abs_diff_vs_truth", max_abs_diff(sim, raster::read_bsf(e.truth8))}};
    } else if (stage == "align") {
        const auto m = manifest();
        const auto& e = m.scenes[survey_index(m)];
        const auto fine = raster::read_bsf(e.rgb);
        const auto snapped = align::snap_to_grid(fine, raster::read_bsf(e.coarse).grid(), fine.grid().pixel_w);
        const fs::path dst = work / "aligned" / (e.id + "_rgb.bsf");
        ensure_parent(dst);
        raster::write_bsf(snapped, dst);
        out = {{"scene", e.id}, {"width", snapped.width()}, {"height", snapped.height()}};
    } else if (stage == "register") {
        const auto m = manifest();
        const auto& e = m.scenes[survey_index(m)];
        const auto snapped = raster::read_bsf(work / "aligned" / (e.id + "_rgb.bsf"));
        const auto est = align::register_images(snapped, raster::read_bsf(e.coarse), reg);
        write_json(work / "shift.json", align::to_json(est, false));
        raster::write_bsf(align::apply_shift(snapped, est.shift_px_x, est.shift_px_y),
                          work / "aligned" / (e.id + "_rgb_registered.bsf"));
        out = {{"scene", e.id}, {"shift_px", {est.shift_px_x, est.shift_px_y}}, {"shift_m", {est.shift_x, est.shift_y}}};
    } else if (stage == "train") {
        const auto m = manifest();
        for (const auto& preset : presets) {
            StageTimer tp("train:" + preset);
            const auto res = fusion::train_on_manifest(m, preset, train, model_seed);
            ensure_parent(model_path(preset));
            nn::save_checkpoint(res.model, model_path(preset));
            bytes::write_text(work / "models" / (preset + ".loss.csv"), nn::format_loss_log_csv(res.log));
            out[preset] = {{"steps", res.steps}, {"best_step", res.best_step}, {"best_val_loss", res.best_val_loss},
                           {"parameter_count", res.model.parameter_count()}};
            tp.done(out[preset]);
        }
    } else if (stage == "infer") {
        const auto m = manifest();
        for (const auto& preset : presets) {
            const auto model = nn::load_checkpoint(model_path(preset));
            const auto layout = fusion::model_layout(model);
            std::size_t n = 0;
            for (const auto& e : m.scenes) {
                if (e.split != "test") continue;
                const auto rgb = layout == fusion::InputLayout::Coarse ? raster::Raster{} : raster::read_bsf(e.rgb);
                const auto up = layout == fusion::InputLayout::Rgb ? raster::Raster{} : raster::read_bsf(e.coarse_upsampled);
                const auto pred = nn::infer_tiled(model, fusion::assemble_input(layout, rgb, up), infer);
                ensure_parent(pred_path(preset, e.id));
                raster::write_bsf(pred, pred_path(preset, e.id));
                ++n;
            }
            out[preset] = {{"scenes", n}};
        }
    } else if (stage == "evaluate") {
        const auto m = manifest();
        std::vector<metrics::MetricsReport> base;
        std::string base_csv = std::string(metrics::kCsvHeader) + "\n";
        for (const auto& e : m.scenes) {
            if (e.split != "test") continue;
            base.push_back(metrics::evaluate(raster::read_bsf(e.coarse_upsampled), raster::read_bsf(e.truth8)));
            base_csv += metrics::csv_row(e.site, e.date, base.back()) + "\n";
        }
        const auto baseline = metrics::aggregate(base);
        ensure_parent(work / "eval" / "bicubic.csv");
        bytes::write_text(work / "eval" / "bicubic.csv", base_csv);
        out["bicubic"] = metrics::to_json(baseline);
        for (const auto& preset : presets) {
            std::vector<metrics::MetricsReport> reps;
            std::string csv = std::string(metrics::kCsvHeader) + "\n";
            json scenes = json::array();
            for (const auto& e : m.scenes) {
                if (e.split != "test") continue;
                reps.push_back(metrics::evaluate(raster::read_bsf(pred_path(preset, e.id)), raster::read_bsf(e.truth8)));
                csv += metrics::csv_row(e.site, e.date, reps.back()) + "\n";
                scenes.push_back({{"id", e.id}, {"metrics", metrics::to_json(reps.back())}});
            }
            const auto pooled = metrics::aggregate(reps);
            bytes::write_text(work / "eval" / (preset + ".csv"), csv);
            write_json(work / "eval" / (preset + ".json"),
                       {{"scenes", scenes}, {"pooled", metrics::to_json(pooled)}, {"bicubic", metrics::to_json(baseline)}});
            out[preset] = {{"psnr", pooled.psnr}, {"rmse", pooled.rmse}, {"gain_db", pooled.psnr - baseline.psnr}};
        }
    } else if (stage == "rf-cv") {
        const auto m = manifest();
        const auto& e = m.scenes[survey_index(m)];
        const std::string quadrats = (data() / "quadrats.csv").string();
        std::vector<std::pair<std::string, fs::path>> sources = {{"truth8", e.truth8}, {"rgb", e.rgb}};
        for (const auto& preset : presets) sources.emplace_back("pred-" + preset, pred_path(preset, e.id));
        for (const auto& [name, path] : sources) {
            const auto table = load_samples("", path.string(), quadrats, {});
            const auto report = rf::cross_validate(table.samples, rf.k, rf.forest, rf.seed);
            auto j = rf::to_json(report);
            j["feature_names"] = table.feature_names;
            write_json(work / "rf" / (name + ".json"), j);
            out[name] = j.at("pooled");
        }
    }
    summary[stage] = out;
    t.done(out);
}

}  // namespace

void add_pipeline_command(CLI::App& app, Action& action) {
    auto config = std::make_shared<std::string>();
    auto* sub = app.add_subcommand("pipeline", "Run an ordered list of stages from one config");
    sub->add_option("--config", *config, "Pipeline config JSON")->required();
    sub->callback([config, &action] {
        action = [config] {
            StageTimer t("pipeline");
            auto p = load_pipeline(*config);
            const auto stages = selected_stages(p.cfg);
            fs::create_directories(p.work);
            for (const auto& s : stages) p.run(s);
            write_json(p.work / "summary.json", p.summary);
            emit(p.summary);
            t.done({{"workdir", p.work.string()}, {"stages", stages}});
        };
    });
}

}  // namespace agfuse::cli
