#include "agfuse/raster/bsf.hpp"

#include <json.hpp>

#include "agfuse/bytes.hpp"
#include "agfuse/error.hpp"

namespace agfuse::raster {

using nlohmann::json;

std::vector<std::uint8_t> encode_bsf(const Raster& r) {
    r.validate();
    const GeoGrid& g = r.grid();
    const bool has_mask = !r.all_valid();

    json bands = json::array();
    for (const auto& b : r.bands()) {
        json entry = {{"name", b.name}};
        if (b.wavelength_nm) entry["wavelength_nm"] = *b.wavelength_nm;
        bands.push_back(std::move(entry));
    }
    const json header = {
        {"width", g.width},
        {"height", g.height},
        {"bands", bands},
        {"dtype", "f32"},
        {"geotransform", {g.origin_x, g.pixel_w, 0.0, g.origin_y, 0.0, -g.pixel_h}},
        {"nodata_mask", has_mask},
    };
    const std::string text = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(8 + text.size() + r.values().size_bytes() + r.pixel_count() / 8 + 1);
    out.insert(out.end(), kBsfMagic, kBsfMagic + 4);
    bytes::put_u32le(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    if (has_mask) {
        std::vector<std::uint8_t> bits((r.pixel_count() + 7) / 8, 0);
        const auto mask = r.mask();
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (mask[i]) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
        }
        out.insert(out.end(), bits.begin(), bits.end());
    }
    bytes::put_f32le(out, r.values());
    return out;
}

namespace {

template <typename T>
T header_field(const json& h, const char* key, std::uint64_t offset) {
    if (!h.contains(key)) throw FormatError(std::string("BSF header missing '") + key + "'", offset);
    try {
        return h.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError(std::string("BSF header field '") + key + "' has the wrong type", offset);
    }
}

}  // namespace

Raster decode_bsf(std::span<const std::uint8_t> data) {
    if (data.size() < 4) throw FormatError("BSF file shorter than magic", data.size());
    if (std::memcmp(data.data(), kBsfMagic, 4) != 0) throw FormatError("bad BSF magic", 0);
    if (data.size() < 8) throw FormatError("BSF header length truncated", 4);
    const std::uint64_t header_len = bytes::get_u32le(data.data() + 4);
    constexpr std::uint64_t header_start = 8;
    if (header_start + header_len > data.size()) {
        throw FormatError("BSF header truncated", data.size());
    }

    json h;
    try {
        h = json::parse(data.begin() + header_start, data.begin() + header_start + header_len);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("BSF header is not valid JSON: ") + e.what(),
                          header_start + (e.byte > 0 ? e.byte - 1 : 0));
    }
    if (!h.is_object()) throw FormatError("BSF header is not a JSON object", header_start);

    const auto width = header_field<std::int64_t>(h, "width", header_start);
    const auto height = header_field<std::int64_t>(h, "height", header_start);
    const auto dtype = header_field<std::string>(h, "dtype", header_start);
    const auto gt = header_field<std::vector<double>>(h, "geotransform", header_start);
    const auto has_mask = header_field<bool>(h, "nodata_mask", header_start);
    const auto bands_json = header_field<json>(h, "bands", header_start);

    if (dtype != "f32") throw FormatError("unsupported BSF dtype '" + dtype + "'", header_start);
    if (width < 1 || height < 1 || width > (1 << 30) || height > (1 << 30)) {
        throw FormatError("BSF dimensions out of range", header_start);
    }
    if (gt.size() != 6 || gt[2] != 0.0 || gt[4] != 0.0) {
        throw FormatError("BSF geotransform must be [x0, pw, 0, y0, 0, -ph]", header_start);
    }
    if (!bands_json.is_array() || bands_json.empty()) {
        throw FormatError("BSF header needs a non-empty band array", header_start);
    }

    std::vector<BandInfo> bands;
    for (const auto& b : bands_json) {
        if (!b.is_object() || !b.contains("name") || !b["name"].is_string()) {
            throw FormatError("BSF band entry needs a string 'name'", header_start);
        }
        BandInfo info{b["name"].get<std::string>(), std::nullopt};
        if (b.contains("wavelength_nm")) {
            if (!b["wavelength_nm"].is_number()) throw FormatError("bad wavelength_nm", header_start);
            info.wavelength_nm = b["wavelength_nm"].get<double>();
        }
        bands.push_back(std::move(info));
    }

    GeoGrid grid{gt[0], gt[3], gt[1], -gt[5], static_cast<int>(width), static_cast<int>(height)};
    try {
        grid.validate();
    } catch (const Error& e) {
        throw FormatError(std::string("BSF grid invalid: ") + e.what(), header_start);
    }

    const std::uint64_t pixels = static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height);
    const std::uint64_t mask_bytes = has_mask ? (pixels + 7) / 8 : 0;
    const std::uint64_t payload = static_cast<std::uint64_t>(bands.size()) * pixels * 4;
    const std::uint64_t expected = header_start + header_len + mask_bytes + payload;
    if (data.size() != expected) {
        throw Error(ErrorKind::Corruption,
                    "BSF payload size mismatch: expected " + std::to_string(expected) +
                        " bytes for " + std::to_string(bands.size()) + " band(s) of " +
                        std::to_string(width) + "x" + std::to_string(height) + ", file has " +
                        std::to_string(data.size()));
    }

    Raster r(grid, std::move(bands));
    std::size_t pos = header_start + header_len;
    if (has_mask) {
        auto mask = r.mask();
        for (std::size_t i = 0; i < mask.size(); ++i) {
            mask[i] = (data[pos + i / 8] >> (i % 8)) & 1u;
        }
        pos += mask_bytes;
    }
    bytes::get_f32le(data.data() + pos, r.values());
    r.invalidate_non_finite();
    return r;
}

Raster read_bsf(const std::filesystem::path& path) { return decode_bsf(bytes::read_file(path)); }

void write_bsf(const Raster& r, const std::filesystem::path& path) {
    const auto encoded = encode_bsf(r);
    bytes::write_file(path, encoded);
}

}  // namespace agfuse::raster
