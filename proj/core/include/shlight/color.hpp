#pragma once

#include <array>

#include "shlight/image.hpp"

namespace shlight {

enum class RgbEncoding { linear, gamma };  // sRGB primaries either way
enum class ChromaSpace { lab, luv };

// sRGB <-> CIE XYZ, D65 white point.
std::array<double, 3> rgb_to_xyz(const std::array<double, 3>& rgb_linear);
std::array<double, 3> xyz_to_rgb(const std::array<double, 3>& xyz);

double srgb_decode(double encoded);
double srgb_encode(double linear);

// Raw CIE values: L* in [0, 100], a*/b*/u*/v* in their usual signed ranges.
std::array<double, 3> xyz_to_lab(const std::array<double, 3>& xyz);
std::array<double, 3> lab_to_xyz(const std::array<double, 3>& lab);
std::array<double, 3> xyz_to_luv(const std::array<double, 3>& xyz);
std::array<double, 3> luv_to_xyz(const std::array<double, 3>& luv);

// Network-scaled form: L* / 100, chroma / scale + 0.5. The scales below keep
// the whole sRGB gamut inside [0, 1].
inline constexpr double kLabChromaScale = 255.0;
inline constexpr double kLuvChromaScale = 360.0;

// Converts a whole image into the scaled opponent space (channel 0 =
// lightness, 1..2 = chroma). Gamma-encoded input is decoded first.
LdrImage color_convert(const LdrImage& image, RgbEncoding from, ChromaSpace to);

// Inverse of color_convert, back to RGB in the requested encoding.
LdrImage color_convert_back(const LdrImage& image, ChromaSpace from, RgbEncoding to);

}  // namespace shlight
