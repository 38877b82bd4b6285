#include "agfuse/fusion/fusion.hpp"

#include <algorithm>

#include "agfuse/error.hpp"
#include "agfuse/raster/bsf.hpp"
#include "agfuse/raster/resample.hpp"

namespace agfuse::fusion {

std::string to_string(InputLayout layout) {
    switch (layout) {
        case InputLayout::RgbCoarse: return "rgb+coarse";
        case InputLayout::Rgb: return "rgb";
        case InputLayout::Coarse: return "coarse";
    }
    return "rgb+coarse";
}

InputLayout layout_from_string(const std::string& name) {
    if (name == "rgb+coarse") return InputLayout::RgbCoarse;
    if (name == "rgb") return InputLayout::Rgb;
    if (name == "coarse") return InputLayout::Coarse;
    fail(ErrorKind::Config, "unknown input layout '" + name + "' (rgb+coarse, rgb, coarse)");
}

InputLayout layout_for_preset(const std::string& preset) {
    if (preset == "spectral") return InputLayout::RgbCoarse;
    if (preset == "spectral-rgb") return InputLayout::Rgb;
    if (preset == "spatial" || preset == "temporal") return InputLayout::Coarse;
    fail(ErrorKind::Config, "no input layout for preset '" + preset + "'");
}

raster::Raster assemble_input(InputLayout layout, const raster::Raster& rgb, const raster::Raster& coarse_upsampled) {
    switch (layout) {
        case InputLayout::RgbCoarse: return raster::stack_bands(rgb, coarse_upsampled);
        case InputLayout::Rgb: return rgb;
        case InputLayout::Coarse: return coarse_upsampled;
    }
    return rgb;
}

std::vector<nn::TrainPair> load_pairs(const synth::DatasetManifest& manifest, const std::vector<std::string>& splits,
                                      InputLayout layout) {
    std::vector<nn::TrainPair> pairs;
    for (const auto& e : manifest.scenes) {
        if (std::find(splits.begin(), splits.end(), e.split) == splits.end()) continue;
        const auto rgb = layout == InputLayout::Coarse ? raster::Raster{} : raster::read_bsf(e.rgb);
        const auto up = layout == InputLayout::Rgb ? raster::Raster{} : raster::read_bsf(e.coarse_upsampled);
        pairs.push_back({e.id, e.site, e.date, assemble_input(layout, rgb, up), raster::read_bsf(e.truth8)});
    }
    require(!pairs.empty(), ErrorKind::Data, "manifest has no scenes in the requested splits");
    return pairs;
}

nn::TrainConfig harness_train_config() {
    nn::TrainConfig cfg;
    cfg.patch_coarse = 4;
    cfg.scale = 8;
    cfg.batch_size = 16;
    cfg.learning_rate = 3e-4;
    cfg.epochs = 1000;
    cfg.max_steps = 500;
    cfg.eval_every = 100;
    cfg.precision = "float32";
    return cfg;
}

nn::TrainResult train_on_manifest(const synth::DatasetManifest& manifest, const std::string& preset,
                                  const nn::TrainConfig& cfg, std::uint64_t model_seed) {
    const auto layout = layout_for_preset(preset);
    auto c = cfg;
    c.scale = manifest.config.scale;
    const auto pairs = load_pairs(manifest, {"train", "val"}, layout);
    auto result = nn::train(nn::build_model(nn::ArchConfig::from_preset(preset), model_seed), pairs, c);
    result.model.train_meta["input_layout"] = to_string(layout);
    std::vector<std::string> ids;
    for (const auto& p : pairs) ids.push_back(p.id);
    result.model.train_meta["train_scenes"] = ids;
    return result;
}

InputLayout model_layout(const nn::SrcnnModel& model) {
    if (model.train_meta.contains("input_layout"))
        return layout_from_string(model.train_meta.at("input_layout").get<std::string>());
    return layout_for_preset(model.arch.preset);
}

SplitScore score_split(const nn::SrcnnModel& model, const synth::DatasetManifest& manifest, const std::string& split,
                       const nn::InferOptions& options) {
    const auto layout = model_layout(model);
    SplitScore out;
    std::vector<metrics::MetricsReport> m, b;
    for (const auto& e : manifest.scenes) {
        if (e.split != split) continue;
        const auto up = raster::read_bsf(e.coarse_upsampled);
        const auto rgb = layout == InputLayout::Coarse ? raster::Raster{} : raster::read_bsf(e.rgb);
        const auto truth = raster::read_bsf(e.truth8);
        const auto pred = nn::infer_tiled(model, assemble_input(layout, rgb, up), options);
        SceneScore s{e.id, e.site, e.date, metrics::evaluate(pred, truth), metrics::evaluate(up, truth)};
        m.push_back(s.model);
        b.push_back(s.baseline);
        out.scenes.push_back(std::move(s));
    }
    require(!out.scenes.empty(), ErrorKind::Data, "manifest has no '" + split + "' scenes");
    out.model = metrics::aggregate(m);
    out.baseline = metrics::aggregate(b);
    return out;
}

nlohmann::json to_json(const SplitScore& s) {
    nlohmann::json scenes = nlohmann::json::array();
    for (const auto& sc : s.scenes) {
        scenes.push_back({{"id", sc.id},
                          {"site", sc.site},
                          {"date", sc.date},
                          {"model", metrics::to_json(sc.model)},
                          {"baseline", metrics::to_json(sc.baseline)}});
    }
    return {{"scenes", scenes},
            {"model", metrics::to_json(s.model)},
            {"baseline", metrics::to_json(s.baseline)},
            {"gain_db", s.model.psnr - s.baseline.psnr}};
}

}  // namespace agfuse::fusion
