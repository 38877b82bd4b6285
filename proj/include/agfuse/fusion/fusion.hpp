#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "agfuse/metrics/metrics.hpp"
#include "agfuse/nn/srcnn.hpp"
#include "agfuse/nn/train.hpp"
#include "agfuse/raster/raster.hpp"
#include "agfuse/synth/synth.hpp"

namespace agfuse::fusion {

/// Which dataset products feed the network, in channel order.
enum class InputLayout {
    RgbCoarse,  // fine RGB, then the upsampled coarse bands
    Rgb,        // fine RGB only
    Coarse      // upsampled coarse bands only (spatial / temporal extension)
};

std::string to_string(InputLayout layout);
InputLayout layout_from_string(const std::string& name);
/// spectral -> RgbCoarse, spectral-rgb -> Rgb, spatial / temporal -> Coarse.
InputLayout layout_for_preset(const std::string& preset);

raster::Raster assemble_input(InputLayout layout, const raster::Raster& rgb, const raster::Raster& coarse_upsampled);

/// Training pairs (assembled input, truth8) for the scenes in `splits`.
std::vector<nn::TrainPair> load_pairs(const synth::DatasetManifest& manifest, const std::vector<std::string>& splits,
                                      InputLayout layout);

/// Recipe used for the desk-scale harness: 32x32 patches, batch 16,
/// 500 Adam steps at lr 3e-4, float32 convolutions.
nn::TrainConfig harness_train_config();

/// Builds the preset model, trains on the train and val scenes and records
/// the input layout in train_meta.
nn::TrainResult train_on_manifest(const synth::DatasetManifest& manifest, const std::string& preset,
                                  const nn::TrainConfig& cfg, std::uint64_t model_seed);

/// Layout stored by train_on_manifest, or the preset default.
InputLayout model_layout(const nn::SrcnnModel& model);

struct SceneScore {
    std::string id;
    std::string site;
    std::string date;
    metrics::MetricsReport model;
    metrics::MetricsReport baseline;  // bicubic-upsampled coarse product
};

struct SplitScore {
    std::vector<SceneScore> scenes;
    metrics::MetricsReport model;     // pooled over scenes
    metrics::MetricsReport baseline;
};

SplitScore score_split(const nn::SrcnnModel& model, const synth::DatasetManifest& manifest,
                       const std::string& split, const nn::InferOptions& options = {});

nlohmann::json to_json(const SplitScore& s);

}  // namespace agfuse::fusion
