#include <memory>

#include "agfuse/bytes.hpp"
#include "agfuse/fusion/fusion.hpp"
#include "agfuse/raster/bsf.hpp"
#include "agfuse/raster/resample.hpp"
#include "agfuse/rf/forest.hpp"
#include "cli.hpp"

namespace agfuse::cli {

rf::SampleTable load_samples(const std::string& samples, const std::string& raster_path, const std::string& quadrats,
                             const std::vector<std::string>& bands) {
    rf::SampleTable t;
    if (!raster_path.empty()) {
        require(!quadrats.empty(), ErrorKind::Validation, "--raster needs --quadrats");
        auto r = raster::read_bsf(raster_path);
        if (!bands.empty()) {
            std::vector<std::size_t> idx;
            const auto names = r.band_names();
            for (const auto& b : bands) {
                const auto it = std::find(names.begin(), names.end(), b);
                require(it != names.end(), ErrorKind::Schema, "raster has no band '" + b + "'");
                idx.push_back(static_cast<std::size_t>(it - names.begin()));
            }
            r = raster::select_bands(r, idx);
        }
        t.feature_names = r.band_names();
        t.samples = rf::extract_quadrat_features(r, rf::read_quadrats_csv(quadrats));
        return t;
    }
    require(!samples.empty(), ErrorKind::Validation, "give --samples or --raster with --quadrats");
    t = rf::read_samples_csv(samples);
    if (bands.empty()) return t;
    std::vector<std::size_t> idx;
    for (const auto& b : bands) {
        const auto it = std::find(t.feature_names.begin(), t.feature_names.end(), b);
        require(it != t.feature_names.end(), ErrorKind::Schema, "samples have no band '" + b + "'");
        idx.push_back(static_cast<std::size_t>(it - t.feature_names.begin()));
    }
    for (auto& s : t.samples) {
        std::vector<double> f;
        for (std::size_t i : idx) f.push_back(s.features[i]);
        s.features = std::move(f);
    }
    t.feature_names = bands;
    return t;
}

RfSettings load_rf_settings(const std::string& config) {
    RfSettings s;
    if (config.empty()) return s;
    const auto cfg = RunConfig::load(config);
    cfg.allow({"forest", "seed", "k"});
    s.forest = rf::forest_config_from_json(cfg.section("forest"));
    s.seed = cfg.get<std::uint64_t>("seed", s.seed);
    s.k = cfg.get<int>("k", s.k);
    return s;
}

namespace {

struct RfArgs {
    std::string samples, raster, quadrats, out, config;
    std::vector<std::string> bands;
    std::uint64_t seed = 0;
    int k = 0;
    int trees = 0;
};

void add_rf_inputs(CLI::App* sub, RfArgs& a) {
    sub->add_option("--samples", a.samples, "Samples CSV (id,x_m,y_m,side_m,target,<bands>)");
    sub->add_option("--raster", a.raster, "Raster to extract quadrat features from");
    sub->add_option("--quadrats", a.quadrats, "Quadrat CSV (id,x_m,y_m,side_m,target)");
    sub->add_option("--bands", a.bands, "Feature bands to use (default: all)")->delimiter(',');
    sub->add_option("--out", a.out, "Output JSON")->required();
    sub->add_option("--config", a.config, "Forest config JSON {version, forest{...}, seed, k}");
    sub->add_option("--seed", a.seed, "Seed (overrides the config)");
    sub->add_option("--trees", a.trees, "Tree count (overrides the config)");
}

RfSettings settings_from(const RfArgs& a, const CLI::App* sub) {
    auto s = load_rf_settings(a.config);
    if (sub->count("--seed") > 0) s.seed = a.seed;
    if (sub->count("--trees") > 0) s.forest.n_trees = a.trees;
    if (const auto* k = sub->get_option_no_throw("--k"); k != nullptr && k->count() > 0) s.k = a.k;
    return s;
}

void add_rf_fit(CLI::App& app, Action& action) {
    auto a = std::make_shared<RfArgs>();
    auto* sub = app.add_subcommand("rf-fit", "Fit a random forest regressor on quadrat samples");
    add_rf_inputs(sub, *a);
    sub->callback([a, sub, &action] {
        action = [a, sub] {
            StageTimer t("rf-fit");
            const auto s = settings_from(*a, sub);
            const auto table = load_samples(a->samples, a->raster, a->quadrats, a->bands);
            const auto model = rf::fit_forest(table.samples, s.forest, s.seed);
            std::vector<double> truth, pred;
            for (const auto& q : table.samples) {
                truth.push_back(q.target);
                pred.push_back(rf::predict(model, q.features));
            }
            const json summary = {{"samples", table.samples.size()},
                                  {"feature_names", table.feature_names},
                                  {"oob_r2", std::isnan(model.oob_r2) ? json(nullptr) : json(model.oob_r2)},
                                  {"train_r2", rf::r_squared(truth, pred)}};
            write_json(a->out, {{"feature_names", table.feature_names}, {"model", rf::to_json(model)}});
            emit(summary);
            t.done(summary);
        };
    });
}

void add_rf_cv(CLI::App& app, Action& action) {
    auto a = std::make_shared<RfArgs>();
    auto* sub = app.add_subcommand("rf-cv", "k-fold cross-validated random forest R2 and RMSE");
    add_rf_inputs(sub, *a);
    sub->add_option("--k", a->k, "Fold count (overrides the config)");
    sub->callback([a, sub, &action] {
        action = [a, sub] {
            StageTimer t("rf-cv");
            const auto s = settings_from(*a, sub);
            const auto table = load_samples(a->samples, a->raster, a->quadrats, a->bands);
            const auto report = rf::cross_validate(table.samples, s.k, s.forest, s.seed);
            auto j = rf::to_json(report);
            j["feature_names"] = table.feature_names;
            write_json(a->out, j);
            emit({{"pooled", j.at("pooled")}, {"k", s.k}, {"feature_names", table.feature_names}});
            t.done({{"pooled", j.at("pooled")}, {"samples", table.samples.size()}});
        };
    });
}

void add_train(CLI::App& app, Action& action) {
    struct Args {
        std::string manifest, preset = "spectral", out, config, log, recipe = "default";
        std::uint64_t model_seed = 1;
    };
    auto a = std::make_shared<Args>();
    auto* sub = app.add_subcommand("train", "Train an SRCNN preset on a dataset manifest");
    sub->add_option("--manifest", a->manifest, "Dataset manifest JSON")->required();
    sub->add_option("--preset", a->preset, "spectral, spectral-rgb, spatial or temporal");
    sub->add_option("--out", a->out, "Output checkpoint")->required();
    sub->add_option("--config", a->config, "Train config JSON {version, train{...}, model_seed}");
    sub->add_option("--recipe", a->recipe, "Base settings before the config: default or harness")
        ->check(CLI::IsMember({"default", "harness"}));
    sub->add_option("--log", a->log, "Loss log CSV (default: <out>.loss.csv)");
    sub->add_option("--model-seed", a->model_seed, "Weight initialisation seed");
    sub->callback([a, sub, &action] {
        action = [a, sub] {
            StageTimer t("train");
            auto tc = a->recipe == "harness" ? fusion::harness_train_config() : nn::TrainConfig{};
            std::uint64_t model_seed = a->model_seed;
            if (!a->config.empty()) {
                const auto cfg = RunConfig::load(a->config);
                cfg.allow({"train", "model_seed"});
                auto merged = nn::to_json(tc);
                merged.update(cfg.section("train"));
                tc = nn::train_config_from_json(merged);
                if (sub->count("--model-seed") == 0) model_seed = cfg.get<std::uint64_t>("model_seed", model_seed);
            }
            const auto manifest = synth::read_manifest(a->manifest);
            const auto res = fusion::train_on_manifest(manifest, a->preset, tc, model_seed);
            ensure_parent(a->out);
            nn::save_checkpoint(res.model, a->out);
            const fs::path log = a->log.empty() ? fs::path(a->out + ".loss.csv") : fs::path(a->log);
            ensure_parent(log);
            bytes::write_text(log, nn::format_loss_log_csv(res.log));
            const json summary = {{"out", a->out},
                                  {"preset", a->preset},
                                  {"steps", res.steps},
                                  {"best_step", res.best_step},
                                  {"best_val_loss", res.best_val_loss},
                                  {"train_patches", res.train_patches},
                                  {"val_patches", res.val_patches},
                                  {"parameter_count", res.model.parameter_count()},
                                  {"weight_count", res.model.weight_count()}};
            emit(summary);
            t.done(summary);
        };
    });
}

void add_infer(CLI::App& app, Action& action) {
    struct Args {
        std::string model, out, input, rgb, coarse_up;
        int tile = 512;
        int overlap = -1;
        bool float64 = false;
    };
    auto a = std::make_shared<Args>();
    auto* sub = app.add_subcommand("infer", "Run a trained SRCNN over a raster in tiles");
    sub->add_option("--model", a->model, "Checkpoint")->required();
    sub->add_option("--out", a->out, "Output BSF")->required();
    sub->add_option("--input", a->input, "Assembled network input BSF");
    sub->add_option("--rgb", a->rgb, "Fine RGB BSF (assembled per the model's input layout)");
    sub->add_option("--coarse-up", a->coarse_up, "Upsampled coarse BSF (assembled per the model's input layout)");
    sub->add_option("--tile", a->tile, "Tile side in pixels");
    sub->add_option("--overlap", a->overlap, "Tile overlap (-1 = automatic)");
    sub->add_flag("--float64", a->float64, "64-bit arithmetic");
    sub->callback([a, &action] {
        action = [a] {
            StageTimer t("infer");
            const auto model = nn::load_checkpoint(a->model);
            raster::Raster input;
            if (!a->input.empty()) {
                input = raster::read_bsf(a->input);
            } else {
                const auto layout = fusion::model_layout(model);
                const bool need_rgb = layout != fusion::InputLayout::Coarse;
                const bool need_up = layout != fusion::InputLayout::Rgb;
                require(!(need_rgb && a->rgb.empty()) && !(need_up && a->coarse_up.empty()), ErrorKind::Validation,
                        "model input layout '" + fusion::to_string(layout) + "' needs --input or the matching --rgb/--coarse-up");
                input = fusion::assemble_input(layout, need_rgb ? raster::read_bsf(a->rgb) : raster::Raster{},
                                               need_up ? raster::read_bsf(a->coarse_up) : raster::Raster{});
            }
            nn::InferOptions opts;
            opts.tile = a->tile;
            opts.overlap = a->overlap;
            opts.float64 = a->float64;
            const auto pred = nn::infer_tiled(model, input, opts);
            ensure_parent(a->out);
            raster::write_bsf(pred, a->out);
            const json out = {{"out", a->out}, {"bands", pred.band_names()}, {"width", pred.width()}, {"height", pred.height()}};
            emit(out);
            t.done(out);
        };
    });
}

}  // namespace

void add_model_commands(CLI::App& app, Action& action) {
    add_train(app, action);
    add_infer(app, action);
    add_rf_fit(app, action);
    add_rf_cv(app, action);
}

}  // namespace agfuse::cli
