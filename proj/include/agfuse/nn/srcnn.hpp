#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "agfuse/raster/raster.hpp"

namespace agfuse::nn {

struct ConvSpec {
    int kernel = 3;
    int filters = 1;
    bool operator==(const ConvSpec&) const = default;
};

struct ArchConfig {
    std::string preset = "custom";
    int in_channels = 1;
    int out_channels = 1;
    std::vector<ConvSpec> layers;
    double slope = 0.1;  // LeakyReLU negative slope, applied after all but the last layer

    /// >= 2 layers, odd positive kernels, last filters == out_channels.
    void validate() const;
    /// Sum of kernel half-widths.
    int receptive_radius() const;
    int max_kernel() const;

    /// "spectral" (11->8, 9/5/5, 64/32), "spectral-rgb" (3->8), "spatial" and
    /// "temporal" (8->8, 13/5/5, 64/32).
    static ArchConfig from_preset(const std::string& name);
    static const std::vector<std::string>& preset_names();

    bool operator==(const ArchConfig&) const = default;
};

nlohmann::json to_json(const ArchConfig& a);
ArchConfig arch_from_json(const nlohmann::json& j);

/// Channel-major C x H x W tensor.
template <class T>
struct TensorT {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<T> data;

    TensorT() = default;
    TensorT(int c_, int h_, int w_, T fill = T(0))
        : c(c_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * h_ * w_, fill) {}

    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    T& at(int ch, int y, int x) { return data[ch * plane() + static_cast<std::size_t>(y) * w + x]; }
    T at(int ch, int y, int x) const { return data[ch * plane() + static_cast<std::size_t>(y) * w + x]; }
};
using Tensor = TensorT<double>;
using TensorF = TensorT<float>;

/// Parameters live in one flat vector, per layer W[cout][cin][kh][kw] then
/// b[cout]; this is also the checkpoint order.
struct SrcnnModel {
    ArchConfig arch;
    std::vector<double> parameters;
    std::uint64_t seed = 0;
    std::vector<std::string> output_bands;  // names for inferred rasters
    nlohmann::json train_meta = nlohmann::json::object();

    /// Weights plus biases.
    std::size_t parameter_count() const;
    /// Convolution weights only.
    std::size_t weight_count() const;
    std::size_t weight_offset(std::size_t layer) const;
    std::size_t bias_offset(std::size_t layer) const;
};

/// Exact count from the layer shapes: sum of k*k*cin*cout + cout.
std::size_t parameter_count(const ArchConfig& arch);

/// He-uniform weights (bound sqrt(6 / fan_in)) from CounterRng(seed, layer),
/// zero biases.
SrcnnModel build_model(const ArchConfig& arch, std::uint64_t seed);

/// Same-size output; replicate-edge padding; LeakyReLU between layers.
Tensor forward(const SrcnnModel& model, const Tensor& input);
TensorF forward(const SrcnnModel& model, const TensorF& input);

struct Gradients {
    std::vector<double> parameters;  // same layout as SrcnnModel::parameters
    Tensor input;
};

/// Exact gradients of the forward graph for upstream gradient `grad_out`.
Gradients backward(const SrcnnModel& model, const Tensor& input, const Tensor& grad_out,
                   bool want_input_grad = true);

/// Mean squared error over target-valid pixels (mask 1) and all channels.
/// When `grad` is non-null it receives dLoss/dPred.
double masked_mse(const Tensor& pred, const Tensor& target, std::span<const std::uint8_t> mask,
                  Tensor* grad = nullptr);

/// Invalid pixels become 0.
template <class T>
TensorT<T> raster_to_tensor(const raster::Raster& r);

struct InferOptions {
    int tile = 512;
    int overlap = -1;     // -1 = max(16, receptive radius)
    bool float64 = false;
};

/// Tiled forward pass: each tile is extended by `overlap` on every side,
/// run, and centre-cropped. The output mask equals the input mask.
raster::Raster infer_tiled(const SrcnnModel& model, const raster::Raster& input, const InferOptions& options = {});

/// "SRC1", u32le header length, JSON header, f32le parameters.
std::vector<std::uint8_t> encode_checkpoint(const SrcnnModel& model);
SrcnnModel decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const SrcnnModel& model, const std::filesystem::path& path);
SrcnnModel load_checkpoint(const std::filesystem::path& path);

}  // namespace agfuse::nn
