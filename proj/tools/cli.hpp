#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "agfuse/error.hpp"
#include "agfuse/rf/forest.hpp"
#include "agfuse/spectral/spectral.hpp"
#include "agfuse/synth/synth.hpp"

namespace agfuse::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// The selected subcommand stores its work here; main runs it after parsing.
using Action = std::function<void()>;

inline constexpr int kConfigVersion = 1;

/// 0 success, 1 validation, 2 I/O (unreadable, malformed or corrupt files).
int exit_code(ErrorKind kind);

/// JSON run-config: must carry `version`; unknown keys are rejected;
/// relative paths resolve against the config file's directory.
class RunConfig {
public:
    static RunConfig load(const fs::path& path);
    static RunConfig from_json(json doc, fs::path base);

    const json& doc() const { return doc_; }
    bool has(const char* key) const { return doc_.contains(key); }
    /// Rejects keys outside `allowed` (plus `version`).
    void allow(std::initializer_list<const char*> allowed) const;
    /// Object-valued section, or an empty object when absent.
    json section(const char* key) const;
    fs::path path(const char* key) const;
    fs::path resolve(const std::string& p) const;

    template <class T>
    T get(const char* key, T fallback) const {
        if (!doc_.contains(key)) return fallback;
        try {
            return doc_.at(key).get<T>();
        } catch (const json::exception& e) {
            fail(ErrorKind::Config, "config key '" + std::string(key) + "': " + e.what());
        }
    }

private:
    json doc_;
    fs::path base_;
    fs::path source_;
};

/// One JSON line per event on standard error.
void log_event(const std::string& stage, json fields);

class StageTimer {
public:
    explicit StageTimer(std::string stage) : stage_(std::move(stage)), t0_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }
    /// Logs the stage with its wall time and `outputs`.
    void done(json outputs = json::object()) const;

private:
    std::string stage_;
    std::chrono::steady_clock::time_point t0_;
};

void ensure_parent(const fs::path& path);
void write_json(const fs::path& path, const json& j);
json read_json(const fs::path& path);
/// Prints to standard output (results only).
void emit(const json& j);

/// "default269" or a camera JSON file {version, centers, fwhm}.
spectral::HyperBandSpec load_camera(const std::string& spec);

/// make_fusion_dataset plus quadrats.csv surveyed on the first test scene.
json generate_dataset(const synth::SceneConfig& scene, std::size_t n_scenes, const synth::FieldConfig& field,
                      const fs::path& out_dir);

struct RfSettings {
    rf::ForestConfig forest;
    std::uint64_t seed = 17;
    int k = 5;
};
/// Config JSON {version, forest{...}, seed, k}; empty path = defaults.
RfSettings load_rf_settings(const std::string& config);

/// Samples from a CSV, or quadrat features extracted from a raster;
/// `bands` optionally selects feature columns by name.
rf::SampleTable load_samples(const std::string& samples, const std::string& raster_path, const std::string& quadrats,
                             const std::vector<std::string>& bands);

void add_data_commands(CLI::App& app, Action& action);
void add_model_commands(CLI::App& app, Action& action);
void add_pipeline_command(CLI::App& app, Action& action);

}  // namespace agfuse::cli
