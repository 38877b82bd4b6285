#include <iostream>
#include <mutex>

#include "agfuse/bytes.hpp"
#include "cli.hpp"

namespace agfuse::cli {

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Io:
        case ErrorKind::Format:
        case ErrorKind::Corruption:
            return 2;
        default:
            return 1;
    }
}

RunConfig RunConfig::load(const fs::path& path) {
    const std::string text = bytes::read_text(path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Config, "config " + path.string() + " is not valid JSON: " + e.what());
    }
    auto cfg = from_json(std::move(doc), fs::absolute(path).parent_path());
    cfg.source_ = path;
    return cfg;
}

RunConfig RunConfig::from_json(json doc, fs::path base) {
    require(doc.is_object(), ErrorKind::Config, "config must be a JSON object");
    require(doc.contains("version"), ErrorKind::Config, "config has no 'version' field");
    require(doc.at("version").is_number_integer() && doc.at("version").get<int>() == kConfigVersion, ErrorKind::Config,
            "unsupported config version " + doc.at("version").dump() + " (expected " +
                std::to_string(kConfigVersion) + ")");
    RunConfig c;
    c.doc_ = std::move(doc);
    c.base_ = std::move(base);
    return c;
}

void RunConfig::allow(std::initializer_list<const char*> allowed) const {
    for (const auto& [key, value] : doc_.items()) {
        if (key == "version") continue;
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) fail(ErrorKind::Config, "unknown config key '" + key + "'");
    }
}

json RunConfig::section(const char* key) const {
    if (!doc_.contains(key)) return json::object();
    require(doc_.at(key).is_object(), ErrorKind::Config, "config key '" + std::string(key) + "' must be an object");
    return doc_.at(key);
}

fs::path RunConfig::path(const char* key) const {
    require(doc_.contains(key) && doc_.at(key).is_string(), ErrorKind::Config,
            "config key '" + std::string(key) + "' must be a path string");
    return resolve(doc_.at(key).get<std::string>());
}

fs::path RunConfig::resolve(const std::string& p) const {
    const fs::path q(p);
    return q.is_absolute() ? q : (base_ / q).lexically_normal();
}

void log_event(const std::string& stage, json fields) {
    static std::mutex mu;
    fields["stage"] = stage;
    const std::lock_guard lock(mu);
    std::cerr << fields.dump() << '\n';
}

void StageTimer::done(json outputs) const {
    outputs["wall_s"] = seconds();
    log_event(stage_, std::move(outputs));
}

void ensure_parent(const fs::path& path) {
    if (!path.has_parent_path()) return;
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
}

void write_json(const fs::path& path, const json& j) {
    ensure_parent(path);
    bytes::write_text(path, j.dump(2) + "\n");
}

json read_json(const fs::path& path) {
    const std::string text = bytes::read_text(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + " is not valid JSON", e.byte);
    }
}

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

spectral::HyperBandSpec load_camera(const std::string& spec) {
    if (spec == "default269") return spectral::HyperBandSpec::default269();
    const auto cfg = RunConfig::load(spec);
    cfg.allow({"centers", "fwhm"});
    spectral::HyperBandSpec cam;
    cam.centers_nm = cfg.get<std::vector<double>>("centers", {});
    cam.fwhm_nm = cfg.get<double>("fwhm", 6.0);
    cam.validate();
    return cam;
}

}  // namespace agfuse::cli
