#include "agfuse/nn/train.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "agfuse/error.hpp"
#include "agfuse/parallel.hpp"
#include "agfuse/rng.hpp"
#include "engine.hpp"

namespace agfuse::nn {

SplitResult split_pairs(const std::vector<TrainPair>& pairs, const SplitSpec& spec) {
    SplitResult r;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        bool held = false;
        if (spec.mode == "none") {
            held = false;
        } else if (spec.mode == "leave-one-image-out") {
            held = pairs[i].id == spec.holdout;
        } else if (spec.mode == "by-site") {
            held = pairs[i].site == spec.holdout;
        } else if (spec.mode == "by-date") {
            held = pairs[i].date == spec.holdout;
        } else {
            fail(ErrorKind::Config, "unknown split mode '" + spec.mode + "'");
        }
        (held ? r.test : r.train).push_back(i);
    }
    if (spec.mode != "none" && r.test.empty()) {
        fail(ErrorKind::Data, "split " + spec.mode + " holds out '" + spec.holdout + "', which matches no image");
    }
    return r;
}

void TrainConfig::validate() const {
    require(patch_coarse >= 1 && scale >= 1, ErrorKind::Config, "patch_coarse and scale must be >= 1");
    require(batch_size >= 1, ErrorKind::Config, "batch_size must be >= 1");
    require(learning_rate > 0.0 && epsilon > 0.0, ErrorKind::Config, "learning rate and epsilon must be > 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::Config, "Adam betas must lie in [0, 1)");
    require(epochs >= 1 && max_steps >= 0 && eval_every >= 0, ErrorKind::Config, "invalid epoch/step counts");
    require(validation_fraction > 0.0 && validation_fraction < 1.0, ErrorKind::Config,
            "validation_fraction must lie in (0, 1)");
    require(precision == "float64" || precision == "float32", ErrorKind::Config,
            "precision must be float64 or float32");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"patch_coarse", c.patch_coarse},
            {"scale", c.scale},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"epsilon", c.epsilon},
            {"epochs", c.epochs},
            {"max_steps", c.max_steps},
            {"eval_every", c.eval_every},
            {"seed", c.seed},
            {"validation_fraction", c.validation_fraction},
            {"precision", c.precision},
            {"split", {{"mode", c.split.mode}, {"holdout", c.split.holdout}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    require(j.is_object(), ErrorKind::Config, "train config must be a JSON object");
    TrainConfig c;
    const auto defaults = to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (!defaults.contains(key)) fail(ErrorKind::Config, "unknown train config key '" + key + "'");
    }
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("patch_coarse", c.patch_coarse);
        get("scale", c.scale);
        get("batch_size", c.batch_size);
        get("learning_rate", c.learning_rate);
        get("beta1", c.beta1);
        get("beta2", c.beta2);
        get("epsilon", c.epsilon);
        get("epochs", c.epochs);
        get("max_steps", c.max_steps);
        get("eval_every", c.eval_every);
        get("seed", c.seed);
        get("validation_fraction", c.validation_fraction);
        get("precision", c.precision);
        if (j.contains("split")) {
            const auto& s = j.at("split");
            for (const auto& [key, value] : s.items()) {
                if (key != "mode" && key != "holdout") fail(ErrorKind::Config, "unknown split key '" + key + "'");
            }
            c.split.mode = s.value("mode", std::string("none"));
            c.split.holdout = s.value("holdout", std::string());
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("bad train config value: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {

struct Patch {
    std::size_t pair = 0;
    int x0 = 0;
    int y0 = 0;
    std::size_t valid = 0;
};

/// Joint validity of input and target.
std::vector<std::uint8_t> joint_mask(const TrainPair& p, int x0, int y0, int side) {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(side) * side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            m[static_cast<std::size_t>(y) * side + x] =
                p.input.valid(y0 + y, x0 + x) && p.target.valid(y0 + y, x0 + x) ? 1 : 0;
    return m;
}

template <class T>
void extract(const raster::Raster& r, int x0, int y0, int side, const std::vector<std::uint8_t>& mask, std::vector<T>& out) {
    const std::size_t P = static_cast<std::size_t>(side) * side;
    out.resize(r.band_count() * P);
    for (std::size_t b = 0; b < r.band_count(); ++b) {
        for (int y = 0; y < side; ++y) {
            for (int x = 0; x < side; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * side + x;
                out[b * P + i] = mask[i] ? static_cast<T>(r.at(b, y0 + y, x0 + x)) : T(0);
            }
        }
    }
}

/// Sum of squared errors of one patch; accumulates dSSE/dparams * grad_scale.
template <class T>
double patch_sse(const std::vector<detail::LayerShape>& shapes, const std::vector<T>& params, T slope,
                 const TrainPair& pair, const Patch& p, int side, double grad_scale, std::vector<T>* grad) {
    const auto mask = joint_mask(pair, p.x0, p.y0, side);
    std::vector<T> x, y;
    extract(pair.input, p.x0, p.y0, side, mask, x);
    extract(pair.target, p.x0, p.y0, side, mask, y);
    std::vector<std::vector<T>> acts;
    detail::forward_all(shapes, params.data(), slope, x.data(), side, side, acts);
    const std::vector<T>& out = acts.back();
    const std::size_t P = mask.size();
    double sse = 0.0;
    std::vector<T> g(grad ? out.size() : 0, T(0));
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!mask[i % P]) continue;
        const double d = static_cast<double>(out[i]) - static_cast<double>(y[i]);
        sse += d * d;
        if (grad) g[i] = static_cast<T>(2.0 * d * grad_scale);
    }
    if (grad) {
        grad->assign(params.size(), T(0));
        detail::backward_all(shapes, params.data(), slope, x.data(), side, side, acts, std::move(g), grad->data(),
                             static_cast<T*>(nullptr));
    }
    return sse;
}

template <class T>
TrainResult train_impl(const SrcnnModel& initial, const std::vector<TrainPair>& pairs, const TrainConfig& cfg) {
    cfg.validate();
    initial.arch.validate();
    require(initial.parameters.size() == initial.parameter_count(), ErrorKind::Shape,
            "initial parameters do not match the architecture");
    if (pairs.empty()) fail(ErrorKind::Data, "training dataset is empty");
    const int side = cfg.patch_side();
    require(side >= initial.arch.max_kernel(), ErrorKind::Config,
            "patch side " + std::to_string(side) + " is smaller than the largest kernel");

    std::vector<Patch> patches;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const TrainPair& p = pairs[i];
        if (!(p.input.grid() == p.target.grid())) fail(ErrorKind::Alignment, "pair '" + p.id + "' is not grid-aligned");
        if (static_cast<int>(p.input.band_count()) != initial.arch.in_channels ||
            static_cast<int>(p.target.band_count()) != initial.arch.out_channels) {
            fail(ErrorKind::Shape, "pair '" + p.id + "' band counts do not match the architecture");
        }
        require(side <= p.input.width() && side <= p.input.height(), ErrorKind::Config,
                "patch side exceeds image '" + p.id + "'");
        for (int y0 = 0; y0 + side <= p.input.height(); y0 += side) {
            for (int x0 = 0; x0 + side <= p.input.width(); x0 += side) {
                const auto m = joint_mask(p, x0, y0, side);
                const auto valid = static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
                if (valid > 0) patches.push_back({i, x0, y0, valid});
            }
        }
    }
    if (patches.size() < 2) fail(ErrorKind::Data, "fewer than 2 patches with valid pixels");

    std::vector<std::size_t> order(patches.size());
    std::iota(order.begin(), order.end(), 0);
    CounterRng split_rng(cfg.seed, 0x56414c);
    shuffle(order, split_rng);
    const std::size_t n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(patches.size()))), 1,
        patches.size() - 1);
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> trn(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(val.begin(), val.end());
    std::sort(trn.begin(), trn.end());

    const auto shapes = detail::layer_shapes(initial.arch);
    const T slope = static_cast<T>(initial.arch.slope);
    const int C = initial.arch.out_channels;
    std::vector<double> params = initial.parameters;
    std::vector<double> m1(params.size(), 0.0), m2(params.size(), 0.0);

    auto evaluate = [&](const std::vector<T>& p) {
        std::vector<double> sse(val.size());
        parallel_for(val.size(), [&](std::size_t i) {
            const Patch& pt = patches[val[i]];
            sse[i] = patch_sse<T>(shapes, p, slope, pairs[pt.pair], pt, side, 0.0, nullptr);
        });
        double total = 0.0, count = 0.0;
        for (std::size_t i = 0; i < val.size(); ++i) {
            total += sse[i];
            count += static_cast<double>(patches[val[i]].valid) * C;
        }
        return total / count;
    };

    TrainResult result;
    result.train_patches = trn.size();
    result.val_patches = val.size();
    result.best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<double> best = params;

    const std::size_t B = static_cast<std::size_t>(cfg.batch_size);
    std::vector<std::vector<T>> grads(B);
    std::vector<double> sse(B);
    int step = 0;
    double window_loss = 0.0;
    int window_steps = 0;
    bool done = false;
    auto record = [&](int epoch, const std::vector<T>& p) {
        const double v = evaluate(p);
        result.log.push_back({step, epoch, window_steps ? window_loss / window_steps : 0.0, v});
        window_loss = 0.0;
        window_steps = 0;
        if (v < result.best_val_loss) {
            result.best_val_loss = v;
            result.best_step = step;
            best = params;
        }
    };

    std::vector<T> tparams(params.begin(), params.end());
    for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
        std::vector<std::size_t> perm = trn;
        CounterRng epoch_rng(cfg.seed, 0x45504f4348, static_cast<std::uint64_t>(epoch));
        shuffle(perm, epoch_rng);
        for (std::size_t start = 0; start < perm.size() && !done; start += B) {
            const std::size_t nb = std::min(B, perm.size() - start);
            double count = 0.0;
            for (std::size_t i = 0; i < nb; ++i) count += static_cast<double>(patches[perm[start + i]].valid) * C;
            const double scale = 1.0 / count;
            parallel_for(nb, [&](std::size_t i) {
                const Patch& pt = patches[perm[start + i]];
                sse[i] = patch_sse<T>(shapes, tparams, slope, pairs[pt.pair], pt, side, scale, &grads[i]);
            });
            // Fixed-order reduction, then a serial Adam step in 64-bit.
            std::vector<double> g(params.size(), 0.0);
            double loss = 0.0;
            for (std::size_t i = 0; i < nb; ++i) {
                loss += sse[i];
                for (std::size_t k = 0; k < g.size(); ++k) g[k] += static_cast<double>(grads[i][k]);
            }
            loss *= scale;
            ++step;
            const double c1 = 1.0 - std::pow(cfg.beta1, step);
            const double c2 = 1.0 - std::pow(cfg.beta2, step);
            for (std::size_t k = 0; k < params.size(); ++k) {
                m1[k] = cfg.beta1 * m1[k] + (1.0 - cfg.beta1) * g[k];
                m2[k] = cfg.beta2 * m2[k] + (1.0 - cfg.beta2) * g[k] * g[k];
                params[k] -= cfg.learning_rate * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + cfg.epsilon);
                tparams[k] = static_cast<T>(params[k]);
            }
            window_loss += loss;
            ++window_steps;
            if (cfg.eval_every > 0 && step % cfg.eval_every == 0) record(epoch, tparams);
            if (cfg.max_steps > 0 && step >= cfg.max_steps) done = true;
        }
        if (cfg.eval_every == 0 || (window_steps > 0 && (done || epoch + 1 == cfg.epochs))) record(epoch, tparams);
    }

    result.steps = step;
    result.model = initial;
    result.model.parameters = best;
    result.model.output_bands = pairs.front().target.band_names();
    result.model.train_meta = {{"seed", cfg.seed},
                               {"epochs", cfg.epochs},
                               {"steps", step},
                               {"optimizer", {{"name", "adam"}, {"learning_rate", cfg.learning_rate},
                                              {"beta1", cfg.beta1}, {"beta2", cfg.beta2}, {"epsilon", cfg.epsilon}}},
                               {"loss", "masked_mse"},
                               {"batch_size", cfg.batch_size},
                               {"patch_coarse", cfg.patch_coarse},
                               {"scale", cfg.scale},
                               {"precision", cfg.precision},
                               {"train_patches", trn.size()},
                               {"val_patches", val.size()},
                               {"best_step", result.best_step},
                               {"best_val_loss", result.best_val_loss},
                               {"final_train_loss", result.log.empty() ? 0.0 : result.log.back().train_loss}};
    return result;
}

}  // namespace

TrainResult train(const SrcnnModel& initial, const std::vector<TrainPair>& pairs, const TrainConfig& cfg) {
    cfg.validate();
    return cfg.precision == "float32" ? train_impl<float>(initial, pairs, cfg) : train_impl<double>(initial, pairs, cfg);
}

std::string format_loss_log_csv(const std::vector<LossRecord>& log) {
    std::ostringstream out;
    out.precision(10);
    out << "step,epoch,train_loss,val_loss\n";
    for (const auto& r : log) out << r.step << ',' << r.epoch << ',' << r.train_loss << ',' << r.val_loss << '\n';
    return out.str();
}

}  // namespace agfuse::nn
