#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "agfuse/raster/raster.hpp"

namespace agfuse::rf {

/// Field sampling square centred at (x_m, y_m).
struct Quadrat {
    std::string id;
    double x_m = 0.0;
    double y_m = 0.0;
    double side_m = 0.5;
    double target = 0.0;
};

struct QuadratSample {
    std::string id;
    double x_m = 0.0;
    double y_m = 0.0;
    double side_m = 0.5;
    double target = 0.0;
    std::vector<double> features;  // per-band mean reflectance
};

/// Per-band mean over valid pixels whose centres fall in the half-open
/// square [x - s/2, x + s/2) x (y - s/2, y + s/2].
std::vector<QuadratSample> extract_quadrat_features(const raster::Raster& r,
                                                    const std::vector<Quadrat>& quadrats);

/// CSV `id,x_m,y_m,side_m,target,<band columns>`.
struct SampleTable {
    std::vector<std::string> feature_names;
    std::vector<QuadratSample> samples;
};
std::string format_samples_csv(const SampleTable& t);
SampleTable parse_samples_csv(const std::string& text);
void write_samples_csv(const SampleTable& t, const std::filesystem::path& path);
SampleTable read_samples_csv(const std::filesystem::path& path);

/// Quadrat list: the first five sample columns; extra band columns are ignored.
std::string format_quadrats_csv(const std::vector<Quadrat>& quadrats);
std::vector<Quadrat> parse_quadrats_csv(const std::string& text);
void write_quadrats_csv(const std::vector<Quadrat>& quadrats, const std::filesystem::path& path);
std::vector<Quadrat> read_quadrats_csv(const std::filesystem::path& path);

struct ForestConfig {
    int n_trees = 500;
    int max_features = 0;       // 0 = ceil(p / 3)
    int min_samples_leaf = 1;
    int max_depth = 0;          // 0 = unbounded
    bool bootstrap = true;
};

struct TreeNode {
    int feature = -1;           // -1 marks a leaf
    double threshold = 0.0;     // go left when x[feature] <= threshold
    int left = -1;
    int right = -1;
    double value = 0.0;         // leaf mean
    int samples = 0;
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    double predict(std::span<const double> x) const;
};

struct ForestModel {
    std::vector<Tree> trees;
    ForestConfig config;
    std::uint64_t seed = 0;
    std::size_t n_features = 0;
    double target_min = 0.0;
    double target_max = 0.0;
    double oob_r2 = std::numeric_limits<double>::quiet_NaN();  // NaN without bootstrap
};

/// Bagged CART regression trees. Splits minimise the summed child squared
/// error over max_features candidate features drawn per node from the tree's
/// own stream (seed, tree index); equal gains resolve to the lowest feature
/// index, then the lowest threshold.
ForestModel fit_forest(std::span<const std::vector<double>> features, std::span<const double> targets,
                       const ForestConfig& cfg, std::uint64_t seed);
ForestModel fit_forest(std::span<const QuadratSample> samples, const ForestConfig& cfg, std::uint64_t seed);

/// Mean of the tree predictions.
double predict(const ForestModel& model, std::span<const double> features);

double r_squared(std::span<const double> truth, std::span<const double> pred);
double rmse(std::span<const double> truth, std::span<const double> pred);

struct FoldResult {
    int fold = 0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    double r2 = 0.0;
    double rmse = 0.0;
};

struct CvReport {
    int k = 5;
    std::uint64_t seed = 0;
    std::vector<FoldResult> folds;
    double pooled_r2 = 0.0;
    double pooled_rmse = 0.0;
    std::vector<int> fold_of;             // fold index per input sample
    std::vector<double> predictions;      // held-out prediction per input sample
};

/// Seeded shuffle, contiguous k-way partition, one forest per fold.
CvReport cross_validate(std::span<const QuadratSample> samples, int k, const ForestConfig& cfg,
                        std::uint64_t seed);

nlohmann::json to_json(const ForestConfig& c);
/// Unknown keys are rejected.
ForestConfig forest_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CvReport& r);
nlohmann::json to_json(const ForestModel& m);
ForestModel forest_from_json(const nlohmann::json& j);

}  // namespace agfuse::rf
