#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "shlight/geometry.hpp"

namespace shlight {

// Linear radiance image, 3 channels, row-major, 32-bit floats. The same
// container holds full equirectangular panoramas (width == 2 * height) and
// perspective crops; operations that require a full sphere validate the
// aspect themselves.
struct RadianceMap {
    int width = 0;
    int height = 0;
    std::vector<float> data;  // height * width * 3
    float exposure_scale = 1.0f;  // multiplier applied at load time

    RadianceMap() = default;
    RadianceMap(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0f) {}

    static RadianceMap constant(int w, int h, std::array<float, 3> rgb);

    float* pixel(int x, int y) { return data.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const float* pixel(int x, int y) const {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }

    bool is_panorama() const { return width == 2 * height && height > 0; }
};

// Display-referred image with values clamped to [0, 1]; 8-bit on disk.
struct LdrImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;  // height * width * 3, each in [0, 1]

    LdrImage() = default;
    LdrImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0f) {}

    float* pixel(int x, int y) { return data.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const float* pixel(int x, int y) const {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
};

// Throws std::invalid_argument naming the first offending pixel.
void validate_finite(const RadianceMap& map);

// Bilinear sample at continuous pixel coordinates (x, y); x wraps around
// (azimuth periodicity), y clamps (poles).
std::array<float, 3> sample_bilinear_wrap(const RadianceMap& map, double x, double y);

// Equirect lookup of a direction.
std::array<float, 3> sample_equirect(const RadianceMap& map, const Direction& d);

// Nearest-pixel equirect lookup (used by the Monte-Carlo projection oracle
// so it integrates exactly the piecewise-constant signal the quadrature sums).
std::array<float, 3> sample_equirect_nearest(const RadianceMap& map, const Direction& d);

// Half-pixel-center bilinear resize (both directions), no wrap.
RadianceMap resize_bilinear(const RadianceMap& src, int out_width, int out_height);
LdrImage resize_bilinear(const LdrImage& src, int out_width, int out_height);

}  // namespace shlight
