#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "agfuse/nn/srcnn.hpp"
#include "agfuse/raster/raster.hpp"

namespace agfuse::nn {

/// One co-registered training image: assembled network input and target.
struct TrainPair {
    std::string id;
    std::string site;
    std::string date;
    raster::Raster input;
    raster::Raster target;
};

/// Which images are held out from training entirely.
///   none                 every image trains
///   leave-one-image-out  `holdout` names the image id
///   by-site / by-date    `holdout` names the site / date
struct SplitSpec {
    std::string mode = "none";
    std::string holdout;
};

struct SplitResult {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

SplitResult split_pairs(const std::vector<TrainPair>& pairs, const SplitSpec& spec);

struct TrainConfig {
    int patch_coarse = 2;         // patch side in coarse pixels
    int scale = 8;                // fine pixels per coarse pixel
    int batch_size = 16;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int epochs = 1;
    int max_steps = 0;            // 0 = run all epochs
    int eval_every = 0;           // 0 = once per epoch
    std::uint64_t seed = 1;
    double validation_fraction = 0.1;
    std::string precision = "float64";  // or "float32" for the conv arithmetic
    SplitSpec split;

    void validate() const;
    int patch_side() const { return patch_coarse * scale; }
};

nlohmann::json to_json(const TrainConfig& c);
/// Unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LossRecord {
    int step = 0;
    int epoch = 0;
    double train_loss = 0.0;  // mean batch loss since the previous record
    double val_loss = 0.0;
};

struct TrainResult {
    SrcnnModel model;         // best-validation parameters
    std::vector<LossRecord> log;
    int steps = 0;
    int best_step = 0;
    double best_val_loss = 0.0;
    std::size_t train_patches = 0;
    std::size_t val_patches = 0;
};

/// Adam on masked MSE over coarse-aligned, non-overlapping patches. A seeded
/// subset of the patches validates; the rest are shuffled every epoch.
/// Within a batch, per-patch gradients may be computed in parallel and are
/// summed in patch order, so results do not depend on the worker count.
TrainResult train(const SrcnnModel& initial, const std::vector<TrainPair>& pairs, const TrainConfig& cfg);

std::string format_loss_log_csv(const std::vector<LossRecord>& log);

}  // namespace agfuse::nn
