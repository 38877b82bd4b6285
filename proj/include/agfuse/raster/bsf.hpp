#pragma once

#include <filesystem>

#include "agfuse/raster/raster.hpp"

namespace agfuse::raster {

/// Band-Stack Format:
///   "BSF1" | u32le header length N | N bytes UTF-8 JSON header
///   | optional ceil(w*h/8) byte validity bitmask (row-major, LSB first, 1 = valid)
///   | bands*w*h f32le values, band-planar, row-major.
inline constexpr char kBsfMagic[4] = {'B', 'S', 'F', '1'};

Raster read_bsf(const std::filesystem::path& path);
void write_bsf(const Raster& r, const std::filesystem::path& path);

/// In-memory variants used by the file functions and by fuzz tests.
Raster decode_bsf(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_bsf(const Raster& r);

}  // namespace agfuse::raster
