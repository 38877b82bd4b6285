#include "agfuse/nn/srcnn.hpp"

#include <cmath>
#include <cstring>

#include "agfuse/bytes.hpp"
#include "agfuse/error.hpp"
#include "agfuse/parallel.hpp"
#include "agfuse/rng.hpp"
#include "engine.hpp"

namespace agfuse::nn {

void ArchConfig::validate() const {
    require(in_channels >= 1 && out_channels >= 1, ErrorKind::Config, "channel counts must be >= 1");
    require(layers.size() >= 2, ErrorKind::Config, "an SRCNN needs at least 2 conv layers");
    for (const auto& l : layers) {
        require(l.kernel >= 1 && l.kernel % 2 == 1, ErrorKind::Config,
                "kernel sizes must be odd and positive, got " + std::to_string(l.kernel));
        require(l.filters >= 1, ErrorKind::Config, "filter counts must be >= 1");
    }
    require(layers.back().filters == out_channels, ErrorKind::Config,
            "last layer has " + std::to_string(layers.back().filters) + " filters but out_channels is " +
                std::to_string(out_channels));
    require(std::isfinite(slope) && slope >= 0.0, ErrorKind::Config, "activation slope must be finite and >= 0");
}

int ArchConfig::receptive_radius() const {
    int r = 0;
    for (const auto& l : layers) r += l.kernel / 2;
    return r;
}

int ArchConfig::max_kernel() const {
    int k = 0;
    for (const auto& l : layers) k = std::max(k, l.kernel);
    return k;
}

ArchConfig ArchConfig::from_preset(const std::string& name) {
    ArchConfig a;
    a.preset = name;
    a.out_channels = 8;
    if (name == "spectral") {
        a.in_channels = 11;
        a.layers = {{9, 64}, {5, 32}, {5, 8}};
    } else if (name == "spectral-rgb") {
        a.in_channels = 3;
        a.layers = {{9, 64}, {5, 32}, {5, 8}};
    } else if (name == "spatial" || name == "temporal") {
        a.in_channels = 8;
        a.layers = {{13, 64}, {5, 32}, {5, 8}};
    } else {
        fail(ErrorKind::Config, "unknown architecture preset '" + name + "'");
    }
    return a;
}

const std::vector<std::string>& ArchConfig::preset_names() {
    static const std::vector<std::string> names = {"spectral", "spectral-rgb", "spatial", "temporal"};
    return names;
}

nlohmann::json to_json(const ArchConfig& a) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : a.layers) layers.push_back({{"kernel", l.kernel}, {"filters", l.filters}});
    return {{"preset", a.preset},
            {"in_channels", a.in_channels},
            {"out_channels", a.out_channels},
            {"layers", layers},
            {"slope", a.slope}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
    ArchConfig a;
    try {
        if (j.is_string()) return ArchConfig::from_preset(j.get<std::string>());
        for (const auto& [key, value] : j.items()) {
            if (key != "preset" && key != "in_channels" && key != "out_channels" && key != "layers" && key != "slope") {
                fail(ErrorKind::Config, "unknown architecture key '" + key + "'");
            }
        }
        if (j.contains("preset") && !j.contains("layers")) {
            a = ArchConfig::from_preset(j.at("preset").get<std::string>());
            if (j.contains("slope")) a.slope = j.at("slope").get<double>();
            a.validate();
            return a;
        }
        a.preset = j.value("preset", std::string("custom"));
        a.in_channels = j.at("in_channels").get<int>();
        a.out_channels = j.at("out_channels").get<int>();
        a.slope = j.value("slope", 0.1);
        for (const auto& l : j.at("layers")) a.layers.push_back({l.at("kernel").get<int>(), l.at("filters").get<int>()});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("malformed architecture: ") + e.what());
    }
    a.validate();
    return a;
}

std::size_t parameter_count(const ArchConfig& arch) {
    std::size_t n = 0;
    int cin = arch.in_channels;
    for (const auto& l : arch.layers) {
        n += static_cast<std::size_t>(l.kernel) * l.kernel * cin * l.filters + static_cast<std::size_t>(l.filters);
        cin = l.filters;
    }
    return n;
}

std::size_t SrcnnModel::parameter_count() const { return nn::parameter_count(arch); }

std::size_t SrcnnModel::weight_count() const {
    std::size_t n = 0;
    for (const auto& l : arch.layers) n += static_cast<std::size_t>(l.filters);
    return parameter_count() - n;
}

std::size_t SrcnnModel::weight_offset(std::size_t layer) const { return detail::layer_shapes(arch).at(layer).w_off; }
std::size_t SrcnnModel::bias_offset(std::size_t layer) const { return detail::layer_shapes(arch).at(layer).b_off; }

SrcnnModel build_model(const ArchConfig& arch, std::uint64_t seed) {
    arch.validate();
    SrcnnModel m;
    m.arch = arch;
    m.seed = seed;
    m.parameters.assign(parameter_count(arch), 0.0);
    const auto shapes = detail::layer_shapes(arch);
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        const auto& s = shapes[l];
        CounterRng rng(seed, l);
        const double bound = std::sqrt(6.0 / (static_cast<double>(s.cin) * s.k * s.k));
        for (std::size_t i = s.w_off; i < s.b_off; ++i) m.parameters[i] = rng.uniform(-bound, bound);
    }
    for (std::size_t i = 0; i < static_cast<std::size_t>(arch.out_channels); ++i) {
        m.output_bands.push_back("out" + std::to_string(i));
    }
    return m;
}

namespace {

template <class T>
void check_input(const SrcnnModel& model, const TensorT<T>& input) {
    if (input.c != model.arch.in_channels) {
        fail(ErrorKind::Shape, "model expects " + std::to_string(model.arch.in_channels) + " input channels, got " +
                                   std::to_string(input.c));
    }
    require(input.data.size() == static_cast<std::size_t>(input.c) * input.plane(), ErrorKind::Shape,
            "tensor data size does not match its shape");
    require(input.h >= 1 && input.w >= 1, ErrorKind::Shape, "empty input tensor");
    require(model.parameters.size() == model.parameter_count(), ErrorKind::Shape,
            "parameter vector does not match the architecture");
}

template <class T>
TensorT<T> forward_impl(const SrcnnModel& model, const TensorT<T>& input) {
    check_input(model, input);
    const auto shapes = detail::layer_shapes(model.arch);
    std::vector<T> params(model.parameters.begin(), model.parameters.end());
    std::vector<T> cur, next, scratch;
    const std::size_t P = input.plane();
    const T* in = input.data.data();
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        next.resize(static_cast<std::size_t>(shapes[l].cout) * P);
        detail::conv_forward(shapes[l], params.data(), in, input.h, input.w, l + 1 < shapes.size(),
                             static_cast<T>(model.arch.slope), next.data(), scratch);
        cur.swap(next);
        in = cur.data();
    }
    TensorT<T> out;
    out.c = model.arch.out_channels;
    out.h = input.h;
    out.w = input.w;
    out.data = std::move(cur);
    return out;
}

}  // namespace

Tensor forward(const SrcnnModel& model, const Tensor& input) { return forward_impl(model, input); }
TensorF forward(const SrcnnModel& model, const TensorF& input) { return forward_impl(model, input); }

Gradients backward(const SrcnnModel& model, const Tensor& input, const Tensor& grad_out, bool want_input_grad) {
    check_input(model, input);
    if (grad_out.c != model.arch.out_channels || grad_out.h != input.h || grad_out.w != input.w) {
        fail(ErrorKind::Shape, "upstream gradient shape does not match the forward output");
    }
    const auto shapes = detail::layer_shapes(model.arch);
    std::vector<std::vector<double>> acts;
    const double slope = model.arch.slope;
    detail::forward_all(shapes, model.parameters.data(), slope, input.data.data(), input.h, input.w, acts);
    Gradients g;
    g.parameters.assign(model.parameters.size(), 0.0);
    if (want_input_grad) g.input = Tensor(input.c, input.h, input.w);
    detail::backward_all(shapes, model.parameters.data(), slope, input.data.data(), input.h, input.w, acts,
                         grad_out.data, g.parameters.data(), want_input_grad ? g.input.data.data() : nullptr);
    return g;
}

double masked_mse(const Tensor& pred, const Tensor& target, std::span<const std::uint8_t> mask, Tensor* grad) {
    if (pred.c != target.c || pred.h != target.h || pred.w != target.w || mask.size() != pred.plane()) {
        fail(ErrorKind::Shape, "prediction, target and mask shapes differ");
    }
    std::size_t valid = 0;
    for (auto m : mask) valid += m != 0;
    if (grad) *grad = Tensor(pred.c, pred.h, pred.w);
    if (valid == 0) return 0.0;
    const double denom = static_cast<double>(valid) * pred.c;
    double sum = 0.0;
    const std::size_t P = pred.plane();
    for (int c = 0; c < pred.c; ++c) {
        for (std::size_t i = 0; i < P; ++i) {
            if (!mask[i]) continue;
            const std::size_t idx = static_cast<std::size_t>(c) * P + i;
            const double d = pred.data[idx] - target.data[idx];
            sum += d * d;
            if (grad) grad->data[idx] = 2.0 * d / denom;
        }
    }
    return sum / denom;
}

template <class T>
TensorT<T> raster_to_tensor(const raster::Raster& r) {
    TensorT<T> t(static_cast<int>(r.band_count()), r.height(), r.width());
    const std::size_t P = r.pixel_count();
    const auto mask = r.mask();
    for (std::size_t b = 0; b < r.band_count(); ++b) {
        const auto plane = r.band(b);
        for (std::size_t i = 0; i < P; ++i) t.data[b * P + i] = mask[i] ? static_cast<T>(plane[i]) : T(0);
    }
    return t;
}
template TensorT<double> raster_to_tensor<double>(const raster::Raster&);
template TensorT<float> raster_to_tensor<float>(const raster::Raster&);

namespace {

template <class T>
TensorT<T> crop_tensor(const TensorT<T>& t, int x0, int y0, int w, int h) {
    TensorT<T> out(t.c, h, w);
    for (int c = 0; c < t.c; ++c)
        for (int y = 0; y < h; ++y)
            std::memcpy(&out.at(c, y, 0), t.data.data() + c * t.plane() + static_cast<std::size_t>(y0 + y) * t.w + x0,
                        sizeof(T) * static_cast<std::size_t>(w));
    return out;
}

template <class T>
raster::Raster infer_impl(const SrcnnModel& model, const raster::Raster& input, const InferOptions& opt) {
    const TensorT<T> x = raster_to_tensor<T>(input);
    check_input(model, x);
    require(opt.tile >= 1, ErrorKind::Validation, "tile size must be >= 1");
    const int overlap = opt.overlap >= 0 ? opt.overlap : std::max(16, model.arch.receptive_radius());
    const int H = input.height(), W = input.width();
    const int tiles_x = (W + opt.tile - 1) / opt.tile;
    const int tiles_y = (H + opt.tile - 1) / opt.tile;

    std::vector<raster::BandInfo> bands;
    for (int c = 0; c < model.arch.out_channels; ++c) {
        const std::string name = static_cast<std::size_t>(c) < model.output_bands.size()
                                     ? model.output_bands[static_cast<std::size_t>(c)]
                                     : "out" + std::to_string(c);
        bands.push_back({name, std::nullopt});
    }
    raster::Raster out(input.grid(), std::move(bands));
    const std::size_t P = out.pixel_count();
    parallel_for(static_cast<std::size_t>(tiles_x) * tiles_y, [&](std::size_t t) {
        const int tx = static_cast<int>(t % tiles_x), ty = static_cast<int>(t / tiles_x);
        const int cx0 = tx * opt.tile, cy0 = ty * opt.tile;
        const int cx1 = std::min(W, cx0 + opt.tile), cy1 = std::min(H, cy0 + opt.tile);
        const int ex0 = std::max(0, cx0 - overlap), ey0 = std::max(0, cy0 - overlap);
        const int ex1 = std::min(W, cx1 + overlap), ey1 = std::min(H, cy1 + overlap);
        const TensorT<T> y = forward(model, crop_tensor(x, ex0, ey0, ex1 - ex0, ey1 - ey0));
        auto values = out.values();
        for (int c = 0; c < y.c; ++c)
            for (int row = cy0; row < cy1; ++row)
                for (int col = cx0; col < cx1; ++col)
                    values[static_cast<std::size_t>(c) * P + static_cast<std::size_t>(row) * W + col] =
                        static_cast<float>(y.at(c, row - ey0, col - ex0));
    });
    std::copy(input.mask().begin(), input.mask().end(), out.mask().begin());
    out.fill_invalid(0.0f);
    return out;
}

}  // namespace

raster::Raster infer_tiled(const SrcnnModel& model, const raster::Raster& input, const InferOptions& options) {
    return options.float64 ? infer_impl<double>(model, input, options) : infer_impl<float>(model, input, options);
}

namespace {
constexpr char kCheckpointMagic[4] = {'S', 'R', 'C', '1'};
}

std::vector<std::uint8_t> encode_checkpoint(const SrcnnModel& model) {
    require(model.parameters.size() == model.parameter_count(), ErrorKind::Shape,
            "parameter vector does not match the architecture");
    const nlohmann::json header = {{"arch", to_json(model.arch)},
                                   {"seed", model.seed},
                                   {"output_bands", model.output_bands},
                                   {"train_meta", model.train_meta},
                                   {"parameter_count", model.parameter_count()},
                                   {"payload_bytes", model.parameter_count() * 4},
                                   {"dtype", "float32le"}};
    const std::string text = header.dump();
    std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
    bytes::put_u32le(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    const std::vector<float> params(model.parameters.begin(), model.parameters.end());
    bytes::put_f32le(out, params);
    return out;
}

SrcnnModel decode_checkpoint(std::span<const std::uint8_t> data) {
    if (data.size() < 8) throw FormatError("checkpoint shorter than its fixed preamble", data.size());
    if (std::memcmp(data.data(), kCheckpointMagic, 4) != 0) throw FormatError("bad checkpoint magic", 0);
    const std::uint32_t len = bytes::get_u32le(data.data() + 4);
    if (len > data.size() - 8) throw FormatError("checkpoint header runs past the end of the file", 4);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(data.begin() + 8, data.begin() + 8 + len);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what(), 8);
    }
    SrcnnModel m;
    std::size_t payload = 0;
    try {
        m.arch = arch_from_json(header.at("arch"));
        m.seed = header.at("seed").get<std::uint64_t>();
        m.output_bands = header.at("output_bands").get<std::vector<std::string>>();
        m.train_meta = header.at("train_meta");
        payload = header.at("payload_bytes").get<std::size_t>();
        if (header.at("parameter_count").get<std::size_t>() != m.parameter_count() ||
            payload != m.parameter_count() * 4) {
            fail(ErrorKind::Corruption, "checkpoint header disagrees with its architecture");
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint header is missing fields: ") + e.what(), 8);
    }
    const std::size_t start = 8 + static_cast<std::size_t>(len);
    if (data.size() - start != payload) {
        fail(ErrorKind::Corruption, "checkpoint payload is " + std::to_string(data.size() - start) +
                                        " bytes, header declares " + std::to_string(payload));
    }
    std::vector<float> params(m.parameter_count());
    bytes::get_f32le(data.data() + start, params);
    m.parameters.assign(params.begin(), params.end());
    return m;
}

void save_checkpoint(const SrcnnModel& model, const std::filesystem::path& path) {
    bytes::write_file(path, encode_checkpoint(model));
}

SrcnnModel load_checkpoint(const std::filesystem::path& path) {
    const auto data = bytes::read_file(path);
    return decode_checkpoint(data);
}

}  // namespace agfuse::nn
