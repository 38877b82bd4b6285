#include <memory>

#include "agfuse/align/align.hpp"
#include "agfuse/bytes.hpp"
#include "agfuse/metrics/metrics.hpp"
#include "agfuse/raster/bsf.hpp"
#include "agfuse/rf/forest.hpp"
#include "agfuse/synth/synth.hpp"
#include "cli.hpp"

namespace agfuse::cli {

namespace {

json weights_summary(const spectral::BandWeights& w) {
    json bands = json::array();
    for (const auto& b : w.bands) {
        bands.push_back({{"name", b.name},
                         {"center_nm", b.center_nm},
                         {"active", b.active_count()},
                         {"residual", b.residual}});
    }
    return {{"bands", bands}, {"band_count", w.bands.size()}, {"active_union", w.active_union_count()}};
}

void write_raster(const raster::Raster& r, const fs::path& path) {
    ensure_parent(path);
    raster::write_bsf(r, path);
}

void add_fit_srf(CLI::App& app, Action& action) {
    struct Args {
        std::string srf, camera = "default269", out;
        double tol = 1e-10;
    };
    auto a = std::make_shared<Args>();
    auto* sub = app.add_subcommand("fit-srf", "Fit nonnegative camera-band weights to each target SRF");
    sub->add_option("--srf", a->srf, "SRF table CSV (band,wavelength_nm,response)")->required();
    sub->add_option("--camera", a->camera, "default269 or a camera JSON {version, centers, fwhm}");
    sub->add_option("--out", a->out, "Output weights JSON")->required();
    sub->add_option("--tol", a->tol, "NNLS tolerance");
    sub->callback([a, &action] {
        action = [a] {
            StageTimer t("fit-srf");
            const auto w = spectral::fit_band_weights(spectral::read_srf_csv(a->srf), load_camera(a->camera), a->tol);
            ensure_parent(a->out);
            spectral::write_band_weights(w, a->out);
            const auto summary = weights_summary(w);
            emit(summary);
            t.done({{"out", a->out}, {"bands", w.bands.size()}, {"active_union", w.active_union_count()}});
        };
    });
}

void add_simulate(CLI::App& app, Action& action) {
    struct Args {
        std::string cube, weights, out;
    };
    auto a = std::make_shared<Args>();
    auto* sub = app.add_subcommand("simulate", "Apply band weights to a hyperspectral cube");
    sub->add_option("--cube", a->cube, "Hyperspectral BSF cube with wavelength metadata")->required();
    sub->add_option("--weights", a->weights, "Weights JSON from fit-srf")->required();
    sub->add_option("--out", a->out, "Output BSF")->required();
    sub->callback([a, &action] {
        action = [a] {
            StageTimer t("simulate");
            const auto r = spectral::simulate_bands(raster::read_bsf(a->cube), spectral::read_band_weights(a->weights));
            write_raster(r, a->out);
            emit({{"out", a->out}, {"bands", r.band_names()}, {"width", r.width()}, {"height", r.height()}});
            t.done({{"out", a->out}, {"bands", r.band_count()}});
        };
    });
}

void add_align(CLI::App& app, Action& action) {
    struct Args {
        std::string fine, coarse, out, shift;
        double pixel = 0.0;
    };
    auto a = std::make_shared<Args>();
    auto* sub = app.add_subcommand("align", "Snap a fine raster onto the coarse grid (optionally apply a shift)");
    sub->add_option("--fine", a->fine, "Fine BSF")->required();
    sub->add_option("--coarse", a->coarse, "Coarse BSF providing the target grid")->required();
    sub->add_option("--out", a->out, "Output BSF")->required();
    sub->add_option("--pixel", a->pixel, "Output pixel size in metres (default: fine pixel size)");
    sub->add_option("--apply-shift", a->shift, "Shift JSON from register, applied after snapping");
    sub->callback([a, &action] {
        action = [a] {
            StageTimer t("align");
            const auto fine = raster::read_bsf(a->fine);
            const auto coarse = raster::read_bsf(a->coarse);
            const double pixel = a->pixel > 0.0 ? a->pixel : fine.grid().pixel_w;
            auto snapped = align::snap_to_grid(fine, coarse.grid(), pixel);
            json out = {{"out", a->out}, {"width", snapped.width()}, {"height", snapped.height()},
                        {"origin_x", snapped.grid().origin_x}, {"origin_y", snapped.grid().origin_y}};
            if (!a->shift.empty()) {
                const auto e = align::shift_estimate_from_json(read_json(a->shift));
                snapped = align::apply_shift(snapped, e.shift_px_x, e.shift_px_y);
                out["applied_shift_px"] = {e.shift_px_x, e.shift_px_y};
            }
            write_raster(snapped, a->out);
            emit(out);
            t.done(out);
        };
    });
}

void add_register(CLI::App& app, Action& action) {
    struct Args {
        std::string fine, coarse, out, config;
        bool grid = false;
    };
    auto a = std::make_shared<Args>();
    auto* sub = app.add_subcommand("register", "Estimate the residual translation between fine and coarse rasters");
    sub->add_option("--fine", a->fine, "Snapped fine BSF")->required();
    sub->add_option("--coarse", a->coarse, "Coarse BSF")->required();
    sub->add_option("--out", a->out, "Output shift JSON")->required();
    sub->add_option("--config", a->config, "Register options JSON {version, coarse_stride, refine_radius, max_shift, min_cells}");
    sub->add_flag("--score-grid", a->grid, "Include every evaluated shift in the output");
    sub->callback([a, &action] {
        action = [a] {
            StageTimer t("register");
            align::RegisterOptions opts;
            if (!a->config.empty()) {
                auto doc = RunConfig::load(a->config).doc();
                doc.erase("version");
                opts = align::register_options_from_json(doc);
            }
            const auto e = align::register_images(raster::read_bsf(a->fine), raster::read_bsf(a->coarse), opts);
            write_json(a->out, align::to_json(e, a->grid));
            emit(align::to_json(e, false));
            t.done({{"shift_px", {e.shift_px_x, e.shift_px_y}}, {"shift_m", {e.shift_x, e.shift_y}},
                    {"evaluations", e.evaluations()}});
        };
    });
}

void add_evaluate(CLI::App& app, Action& action) {
    struct Args {
        std::string pred, truth, out, csv, site = "-", date = "-";
    };
    auto a = std::make_shared<Args>();
    auto* sub = app.add_subcommand("evaluate", "RMSE, MAE and PSNR of a prediction against truth");
    sub->add_option("--pred", a->pred, "Predicted BSF")->required();
    sub->add_option("--truth", a->truth, "Truth BSF")->required();
    sub->add_option("--out", a->out, "Also write the metrics JSON here");
    sub->add_option("--csv", a->csv, "Also write a one-row metrics CSV here");
    sub->add_option("--site", a->site, "Site label for the CSV row");
    sub->add_option("--date", a->date, "Date label for the CSV row");
    sub->callback([a, &action] {
        action = [a] {
            StageTimer t("evaluate");
            const auto r = metrics::evaluate(raster::read_bsf(a->pred), raster::read_bsf(a->truth));
            const auto j = metrics::to_json(r);
            if (!a->out.empty()) write_json(a->out, j);
            if (!a->csv.empty()) {
                ensure_parent(a->csv);
                bytes::write_text(a->csv, std::string(metrics::kCsvHeader) + "\n" + metrics::csv_row(a->site, a->date, r) + "\n");
            }
            emit(j);
            t.done({{"rmse", r.rmse}, {"psnr", r.psnr}, {"psnr_capped", r.psnr_capped}});
        };
    });
}

}  // namespace

/// Synthetic dataset plus a field campaign on the first test scene.
json generate_dataset(const synth::SceneConfig& scene, std::size_t n_scenes, const synth::FieldConfig& field,
                      const fs::path& out_dir) {
    synth::make_fusion_dataset(scene, n_scenes, out_dir);
    const auto manifest = synth::read_manifest(out_dir / "manifest.json");
    const synth::DatasetEntry* survey = nullptr;
    for (const auto& e : manifest.scenes) {
        if (e.split == "test") {
            survey = &e;
            break;
        }
    }
    const auto quadrats = synth::make_field_quadrats(raster::read_bsf(survey->truth8), field);
    rf::write_quadrats_csv(quadrats, out_dir / "quadrats.csv");
    return {{"manifest", (out_dir / "manifest.json").string()},
            {"scenes", manifest.scenes.size()},
            {"quadrats", quadrats.size()},
            {"survey_scene", survey->id}};
}

void add_gen_synthetic(CLI::App& app, Action& action) {
    struct Args {
        std::string out, config;
        std::uint64_t seed = 7;
        std::size_t scenes = 8;
    };
    auto a = std::make_shared<Args>();
    auto* sub = app.add_subcommand("gen-synthetic", "Generate a synthetic fusion dataset with known truth");
    auto* seed = sub->add_option("--seed", a->seed, "Dataset seed");
    auto* scenes = sub->add_option("--scenes", a->scenes, "Number of scenes (>= 3)");
    sub->add_option("--out", a->out, "Output directory")->required();
    sub->add_option("--config", a->config, "Config JSON {version, scenes, scene{...}, field{...}}");
    sub->callback([a, seed, scenes, &action] {
        action = [a, seed, scenes] {
            StageTimer t("gen-synthetic");
            synth::SceneConfig scene;
            synth::FieldConfig field;
            std::size_t n = a->scenes;
            if (!a->config.empty()) {
                const auto cfg = RunConfig::load(a->config);
                cfg.allow({"scenes", "scene", "field"});
                scene = synth::scene_config_from_json(cfg.section("scene"));
                field = synth::field_config_from_json(cfg.section("field"));
                n = cfg.get<std::size_t>("scenes", n);
            }
            if (seed->count() > 0 || a->config.empty()) scene.seed = a->seed;
            if (scenes->count() > 0) n = a->scenes;
            const auto out = generate_dataset(scene, n, field, a->out);
            emit(out);
            t.done(out);
        };
    });
}

void add_data_commands(CLI::App& app, Action& action) {
    add_fit_srf(app, action);
    add_simulate(app, action);
    add_align(app, action);
    add_register(app, action);
    add_evaluate(app, action);
    add_gen_synthetic(app, action);
}

}  // namespace agfuse::cli
