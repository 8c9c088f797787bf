#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shlight/image.hpp"

namespace shlight {

// Decodes Radiance RGBE (.hdr, flat or RLE scanlines) or PFM (PF/Pf, either
// endianness) by sniffing the magic bytes. Throws parse_error with the byte
// offset of the first malformed input.
RadianceMap read_radiance_map(const std::vector<std::uint8_t>& bytes);

RadianceMap load_radiance_map(const std::string& path);

// Radiance RGBE with RLE scanlines.
std::vector<std::uint8_t> encode_hdr(const RadianceMap& map);
void save_hdr(const std::string& path, const RadianceMap& map);

// PFM, color, little-endian, bottom-to-top rows (scale header -1.0).
std::vector<std::uint8_t> encode_pfm(const RadianceMap& map);
void save_pfm(const std::string& path, const RadianceMap& map);

// 8-bit RGB PNG; values quantized with round(v * 255).
void save_png(const std::string& path, const LdrImage& image);
LdrImage load_png(const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace shlight
