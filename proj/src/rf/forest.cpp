#include "agfuse/rf/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "agfuse/bytes.hpp"
#include "agfuse/error.hpp"
#include "agfuse/parallel.hpp"
#include "agfuse/rng.hpp"

namespace agfuse::rf {

std::vector<QuadratSample> extract_quadrat_features(const raster::Raster& r, const std::vector<Quadrat>& quadrats) {
    const raster::GeoGrid& g = r.grid();
    std::vector<QuadratSample> out;
    out.reserve(quadrats.size());
    for (const auto& q : quadrats) {
        require(q.side_m > 0.0, ErrorKind::Validation, "quadrat '" + q.id + "' has a nonpositive side");
        const double h = 0.5 * q.side_m;
        const int col_min = std::max(0, static_cast<int>(std::ceil((q.x_m - h - g.origin_x) / g.pixel_w - 0.5)));
        const int col_max = std::min(g.width - 1, static_cast<int>(std::ceil((q.x_m + h - g.origin_x) / g.pixel_w - 0.5)) - 1);
        const int row_min = std::max(0, static_cast<int>(std::ceil((g.origin_y - (q.y_m + h)) / g.pixel_h - 0.5)));
        const int row_max = std::min(g.height - 1, static_cast<int>(std::ceil((g.origin_y - (q.y_m - h)) / g.pixel_h - 0.5)) - 1);

        std::vector<double> sums(r.band_count(), 0.0);
        std::size_t count = 0;
        for (int row = row_min; row <= row_max; ++row) {
            for (int col = col_min; col <= col_max; ++col) {
                if (!r.valid(row, col)) continue;
                ++count;
                for (std::size_t b = 0; b < r.band_count(); ++b) sums[b] += r.at(b, row, col);
            }
        }
        if (count == 0) fail(ErrorKind::Coverage, "quadrat '" + q.id + "' contains no valid pixel");
        QuadratSample s{q.id, q.x_m, q.y_m, q.side_m, q.target, {}};
        for (double v : sums) s.features.push_back(v / static_cast<double>(count));
        out.push_back(std::move(s));
    }
    return out;
}

std::string format_samples_csv(const SampleTable& t) {
    std::ostringstream out;
    out.precision(17);
    out << "id,x_m,y_m,side_m,target";
    for (const auto& n : t.feature_names) out << ',' << n;
    out << '\n';
    for (const auto& s : t.samples) {
        out << s.id << ',' << s.x_m << ',' << s.y_m << ',' << s.side_m << ',' << s.target;
        for (double f : s.features) out << ',' << f;
        out << '\n';
    }
    return out.str();
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_number(const std::string& s, int lineno) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::Validation, "samples CSV line " + std::to_string(lineno) + ": bad number '" + s + "'");
}

}  // namespace

namespace {

SampleTable parse_table(const std::string& text, std::size_t min_bands) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::Validation, "samples CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv(line);
    const std::vector<std::string> fixed = {"id", "x_m", "y_m", "side_m", "target"};
    if (header.size() < fixed.size() + min_bands || !std::equal(fixed.begin(), fixed.end(), header.begin())) {
        fail(ErrorKind::Validation, "samples CSV header must start with id,x_m,y_m,side_m,target and name >= " +
                                        std::to_string(min_bands) + " band(s)");
    }
    SampleTable t;
    t.feature_names.assign(header.begin() + 5, header.end());
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            fail(ErrorKind::Validation, "samples CSV line " + std::to_string(lineno) + " has " +
                                            std::to_string(cells.size()) + " fields, expected " +
                                            std::to_string(header.size()));
        }
        QuadratSample s;
        s.id = cells[0];
        s.x_m = parse_number(cells[1], lineno);
        s.y_m = parse_number(cells[2], lineno);
        s.side_m = parse_number(cells[3], lineno);
        s.target = parse_number(cells[4], lineno);
        for (std::size_t i = 5; i < cells.size(); ++i) s.features.push_back(parse_number(cells[i], lineno));
        t.samples.push_back(std::move(s));
    }
    return t;
}

}  // namespace

SampleTable parse_samples_csv(const std::string& text) { return parse_table(text, 1); }

std::string format_quadrats_csv(const std::vector<Quadrat>& quadrats) {
    SampleTable t;
    for (const auto& q : quadrats) t.samples.push_back({q.id, q.x_m, q.y_m, q.side_m, q.target, {}});
    return format_samples_csv(t);
}

std::vector<Quadrat> parse_quadrats_csv(const std::string& text) {
    std::vector<Quadrat> out;
    for (const auto& s : parse_table(text, 0).samples) out.push_back({s.id, s.x_m, s.y_m, s.side_m, s.target});
    return out;
}

void write_quadrats_csv(const std::vector<Quadrat>& quadrats, const std::filesystem::path& path) {
    bytes::write_text(path, format_quadrats_csv(quadrats));
}

std::vector<Quadrat> read_quadrats_csv(const std::filesystem::path& path) {
    return parse_quadrats_csv(bytes::read_text(path));
}

void write_samples_csv(const SampleTable& t, const std::filesystem::path& path) {
    bytes::write_text(path, format_samples_csv(t));
}

SampleTable read_samples_csv(const std::filesystem::path& path) {
    return parse_samples_csv(bytes::read_text(path));
}

double Tree::predict(std::span<const double> x) const {
    int n = 0;
    while (nodes[static_cast<std::size_t>(n)].feature >= 0) {
        const TreeNode& node = nodes[static_cast<std::size_t>(n)];
        n = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
    }
    return nodes[static_cast<std::size_t>(n)].value;
}

namespace {

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double child_sse = std::numeric_limits<double>::infinity();
};

class TreeBuilder {
public:
    TreeBuilder(std::span<const std::vector<double>> X, std::span<const double> y, const ForestConfig& cfg,
                int mtry, CounterRng& rng)
        : X_(X), y_(y), cfg_(cfg), mtry_(mtry), rng_(rng), p_(X.front().size()) {}

    Tree build(std::vector<std::size_t> samples) {
        Tree t;
        grow(t, std::move(samples), 0);
        return t;
    }

private:
    int grow(Tree& t, std::vector<std::size_t> idx, int depth) {
        const int id = static_cast<int>(t.nodes.size());
        t.nodes.emplace_back();
        double sum = 0.0;
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t i : idx) {
            sum += y_[i];
            lo = std::min(lo, y_[i]);
            hi = std::max(hi, y_[i]);
        }
        const std::size_t n = idx.size();
        t.nodes[static_cast<std::size_t>(id)].value = sum / static_cast<double>(n);
        t.nodes[static_cast<std::size_t>(id)].samples = static_cast<int>(n);

        const auto leaf = static_cast<std::size_t>(cfg_.min_samples_leaf);
        if (n < 2 * leaf || lo == hi || (cfg_.max_depth > 0 && depth >= cfg_.max_depth)) return id;

        const Split split = find_split(idx);
        if (split.feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (std::size_t i : idx) {
            (X_[i][static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right).push_back(i);
        }
        idx.clear();
        idx.shrink_to_fit();
        const int l = grow(t, std::move(left), depth + 1);
        const int r = grow(t, std::move(right), depth + 1);
        TreeNode& node = t.nodes[static_cast<std::size_t>(id)];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = l;
        node.right = r;
        return id;
    }

    Split find_split(const std::vector<std::size_t>& idx) {
        std::vector<int> perm(p_);
        std::iota(perm.begin(), perm.end(), 0);
        // Partial Fisher-Yates: perm[0..p) becomes a random order.
        for (std::size_t i = 0; i + 1 < p_; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng_.below(p_ - i));
            std::swap(perm[i], perm[j]);
        }
        const std::size_t first = std::min<std::size_t>(static_cast<std::size_t>(mtry_), p_);
        std::vector<int> candidates(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(first));
        std::sort(candidates.begin(), candidates.end());

        Split best;
        for (int f : candidates) consider(f, idx, best);
        // When every drawn feature is constant in this node, keep drawing.
        for (std::size_t k = first; best.feature < 0 && k < p_; ++k) consider(perm[k], idx, best);
        return best;
    }

    void consider(int f, const std::vector<std::size_t>& idx, Split& best) {
        const auto fi = static_cast<std::size_t>(f);
        std::vector<std::pair<double, double>> vals;
        vals.reserve(idx.size());
        for (std::size_t i : idx) vals.emplace_back(X_[i][fi], y_[i]);
        std::sort(vals.begin(), vals.end());

        const std::size_t n = vals.size();
        double tot = 0.0, tot2 = 0.0;
        for (const auto& v : vals) {
            tot += v.second;
            tot2 += v.second * v.second;
        }
        const auto leaf = static_cast<std::size_t>(cfg_.min_samples_leaf);
        double ls = 0.0, ls2 = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            ls += vals[i].second;
            ls2 += vals[i].second * vals[i].second;
            const std::size_t nl = i + 1;
            const std::size_t nr = n - nl;
            if (vals[i].first == vals[i + 1].first || nl < leaf || nr < leaf) continue;
            const double rs = tot - ls;
            const double rs2 = tot2 - ls2;
            const double sse = (ls2 - ls * ls / static_cast<double>(nl)) + (rs2 - rs * rs / static_cast<double>(nr));
            double thr = 0.5 * (vals[i].first + vals[i + 1].first);
            if (!(thr < vals[i + 1].first)) thr = vals[i].first;
            // Strict improvement keeps the lowest feature index / threshold on ties.
            if (sse < best.child_sse || (sse == best.child_sse && f == best.feature && thr < best.threshold)) {
                best = {f, thr, sse};
            }
        }
    }

    std::span<const std::vector<double>> X_;
    std::span<const double> y_;
    const ForestConfig& cfg_;
    int mtry_;
    CounterRng& rng_;
    std::size_t p_;
};

}  // namespace

ForestModel fit_forest(std::span<const std::vector<double>> X, std::span<const double> y, const ForestConfig& cfg,
                       std::uint64_t seed) {
    require(X.size() == y.size(), ErrorKind::Validation, "feature rows and targets differ in length");
    require(X.size() >= 2, ErrorKind::Validation, "random forest needs at least 2 samples");
    const std::size_t p = X.front().size();
    require(p >= 1, ErrorKind::Validation, "random forest needs at least 1 feature");
    for (const auto& row : X) {
        require(row.size() == p, ErrorKind::Schema, "feature rows differ in length");
        for (double v : row) require(std::isfinite(v), ErrorKind::Validation, "non-finite feature value");
    }
    require(cfg.n_trees >= 1 && cfg.min_samples_leaf >= 1 && cfg.max_features >= 0 && cfg.max_depth >= 0,
            ErrorKind::Validation, "invalid forest configuration");

    ForestModel model;
    model.config = cfg;
    model.seed = seed;
    model.n_features = p;
    model.target_min = *std::min_element(y.begin(), y.end());
    model.target_max = *std::max_element(y.begin(), y.end());
    const int mtry = cfg.max_features > 0 ? std::min<int>(cfg.max_features, static_cast<int>(p))
                                          : static_cast<int>((p + 2) / 3);

    const std::size_t n = X.size();
    model.trees.resize(static_cast<std::size_t>(cfg.n_trees));
    std::vector<std::vector<std::uint32_t>> inbag(static_cast<std::size_t>(cfg.n_trees));
    parallel_for(model.trees.size(), [&](std::size_t t) {
        CounterRng rng(seed, t);
        std::vector<std::size_t> sample(n);
        auto& counts = inbag[t];
        counts.assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sample[i] = cfg.bootstrap ? static_cast<std::size_t>(rng.below(n)) : i;
            ++counts[sample[i]];
        }
        std::sort(sample.begin(), sample.end());
        TreeBuilder builder(X, y, cfg, mtry, rng);
        model.trees[t] = builder.build(std::move(sample));
    });

    if (cfg.bootstrap) {
        std::vector<double> truth, pred;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            int c = 0;
            for (std::size_t t = 0; t < model.trees.size(); ++t) {
                if (inbag[t][i] == 0) {
                    s += model.trees[t].predict(X[i]);
                    ++c;
                }
            }
            if (c > 0) {
                truth.push_back(y[i]);
                pred.push_back(s / c);
            }
        }
        if (truth.size() >= 2) model.oob_r2 = r_squared(truth, pred);
    }
    return model;
}

ForestModel fit_forest(std::span<const QuadratSample> samples, const ForestConfig& cfg, std::uint64_t seed) {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (const auto& s : samples) {
        X.push_back(s.features);
        y.push_back(s.target);
    }
    require(!X.empty(), ErrorKind::Validation, "random forest needs at least 2 samples");
    return fit_forest(X, y, cfg, seed);
}

double predict(const ForestModel& model, std::span<const double> features) {
    if (features.size() != model.n_features) {
        fail(ErrorKind::Schema, "forest expects " + std::to_string(model.n_features) + " features, got " +
                                    std::to_string(features.size()));
    }
    double s = 0.0;
    for (const auto& t : model.trees) s += t.predict(features);
    return s / static_cast<double>(model.trees.size());
}

double r_squared(std::span<const double> truth, std::span<const double> pred) {
    require(truth.size() == pred.size() && !truth.empty(), ErrorKind::Validation, "r_squared size mismatch");
    const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
        ss_tot += (truth[i] - mean) * (truth[i] - mean);
    }
    if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    return 1.0 - ss_res / ss_tot;
}

double rmse(std::span<const double> truth, std::span<const double> pred) {
    require(truth.size() == pred.size() && !truth.empty(), ErrorKind::Validation, "rmse size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) s += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    return std::sqrt(s / static_cast<double>(truth.size()));
}

CvReport cross_validate(std::span<const QuadratSample> samples, int k, const ForestConfig& cfg, std::uint64_t seed) {
    const std::size_t n = samples.size();
    if (k < 2 || static_cast<std::size_t>(k) > n) {
        fail(ErrorKind::Partition, "cannot split " + std::to_string(n) + " samples into " + std::to_string(k) + " folds");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    CounterRng shuffle_rng(seed, 0x5348554646ULL);
    shuffle(order, shuffle_rng);

    CvReport report;
    report.k = k;
    report.seed = seed;
    report.fold_of.assign(n, -1);
    report.predictions.assign(n, 0.0);
    for (int f = 0; f < k; ++f) {
        const std::size_t lo = n * static_cast<std::size_t>(f) / static_cast<std::size_t>(k);
        const std::size_t hi = n * static_cast<std::size_t>(f + 1) / static_cast<std::size_t>(k);
        for (std::size_t i = lo; i < hi; ++i) report.fold_of[order[i]] = f;
    }
    for (int f = 0; f < k; ++f) {
        std::vector<QuadratSample> train;
        std::vector<std::size_t> test;
        for (std::size_t i = 0; i < n; ++i) {
            if (report.fold_of[i] == f) {
                test.push_back(i);
            } else {
                train.push_back(samples[i]);
            }
        }
        const std::uint64_t fold_seed = CounterRng(seed, 0x464f4c44ULL, static_cast<std::uint64_t>(f))();
        const ForestModel model = fit_forest(train, cfg, fold_seed);
        std::vector<double> truth, pred;
        for (std::size_t i : test) {
            const double yhat = predict(model, samples[i].features);
            report.predictions[i] = yhat;
            truth.push_back(samples[i].target);
            pred.push_back(yhat);
        }
        report.folds.push_back({f, train.size(), test.size(), r_squared(truth, pred), rmse(truth, pred)});
    }
    std::vector<double> all_truth;
    for (const auto& s : samples) all_truth.push_back(s.target);
    report.pooled_r2 = r_squared(all_truth, report.predictions);
    report.pooled_rmse = rmse(all_truth, report.predictions);
    return report;
}

nlohmann::json to_json(const CvReport& r) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.folds) {
        folds.push_back({{"fold", f.fold}, {"n_train", f.n_train}, {"n_test", f.n_test}, {"r2", f.r2}, {"rmse", f.rmse}});
    }
    return {{"k", r.k},
            {"seed", r.seed},
            {"folds", folds},
            {"pooled", {{"r2", r.pooled_r2}, {"rmse", r.pooled_rmse}}},
            {"fold_of", r.fold_of}};
}

nlohmann::json to_json(const ForestModel& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value, n.samples});
        }
        trees.push_back(std::move(nodes));
    }
    return {{"n_trees", m.config.n_trees},
            {"max_features", m.config.max_features},
            {"min_samples_leaf", m.config.min_samples_leaf},
            {"max_depth", m.config.max_depth},
            {"bootstrap", m.config.bootstrap},
            {"seed", m.seed},
            {"n_features", m.n_features},
            {"target_range", {m.target_min, m.target_max}},
            {"oob_r2", std::isfinite(m.oob_r2) ? nlohmann::json(m.oob_r2) : nlohmann::json(nullptr)},
            {"trees", trees}};
}

nlohmann::json to_json(const ForestConfig& c) {
    return {{"n_trees", c.n_trees},
            {"max_features", c.max_features},
            {"min_samples_leaf", c.min_samples_leaf},
            {"max_depth", c.max_depth},
            {"bootstrap", c.bootstrap}};
}

ForestConfig forest_config_from_json(const nlohmann::json& j) {
    ForestConfig c;
    require(j.is_object(), ErrorKind::Config, "forest config must be a JSON object");
    const auto defaults = to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (!defaults.contains(key)) fail(ErrorKind::Config, "unknown forest config key '" + key + "'");
    }
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("n_trees", c.n_trees);
        get("max_features", c.max_features);
        get("min_samples_leaf", c.min_samples_leaf);
        get("max_depth", c.max_depth);
        get("bootstrap", c.bootstrap);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("bad forest config value: ") + e.what());
    }
    require(c.n_trees >= 1 && c.max_features >= 0 && c.min_samples_leaf >= 1 && c.max_depth >= 0,
            ErrorKind::Config, "forest config values out of range");
    return c;
}

ForestModel forest_from_json(const nlohmann::json& j) {
    ForestModel m;
    try {
        m.config.n_trees = j.at("n_trees").get<int>();
        m.config.max_features = j.at("max_features").get<int>();
        m.config.min_samples_leaf = j.at("min_samples_leaf").get<int>();
        m.config.max_depth = j.at("max_depth").get<int>();
        m.config.bootstrap = j.at("bootstrap").get<bool>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.n_features = j.at("n_features").get<std::size_t>();
        m.target_min = j.at("target_range").at(0).get<double>();
        m.target_max = j.at("target_range").at(1).get<double>();
        if (!j.at("oob_r2").is_null()) m.oob_r2 = j.at("oob_r2").get<double>();
        for (const auto& tj : j.at("trees")) {
            Tree t;
            for (const auto& nj : tj) {
                t.nodes.push_back({nj.at(0).get<int>(), nj.at(1).get<double>(), nj.at(2).get<int>(),
                                   nj.at(3).get<int>(), nj.at(4).get<double>(), nj.at(5).get<int>()});
            }
            const int count = static_cast<int>(t.nodes.size());
            for (const auto& node : t.nodes) {
                if (node.feature >= 0) {
                    require(node.feature < static_cast<int>(m.n_features) && node.left > 0 && node.left < count &&
                                node.right > 0 && node.right < count,
                            ErrorKind::Validation, "forest model has an invalid node");
                }
            }
            require(count > 0, ErrorKind::Validation, "forest model has an empty tree");
            m.trees.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Validation, std::string("malformed forest model: ") + e.what());
    }
    require(!m.trees.empty(), ErrorKind::Validation, "forest model has no trees");
    return m;
}

}  // namespace agfuse::rf
