#include "shlight/image.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace shlight {

RadianceMap RadianceMap::constant(int w, int h, std::array<float, 3> rgb) {
    RadianceMap m(w, h);
    for (std::size_t i = 0; i < m.data.size(); i += 3) {
        m.data[i] = rgb[0];
        m.data[i + 1] = rgb[1];
        m.data[i + 2] = rgb[2];
    }
    return m;
}

void validate_finite(const RadianceMap& map) {
    const float* p = map.data.data();
    std::size_t n = map.data.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(p[i])) {
            std::size_t pix = i / 3;
            int y = static_cast<int>(pix / map.width);
            int x = static_cast<int>(pix % map.width);
            throw std::invalid_argument("non-finite radiance at pixel (" + std::to_string(x) +
                                        ", " + std::to_string(y) + ") channel " +
                                        std::to_string(i % 3));
        }
    }
}

std::array<float, 3> sample_bilinear_wrap(const RadianceMap& map, double x, double y) {
    const int w = map.width, h = map.height;
    // wrap x into [0, w)
    x = x - w * std::floor(x / w);
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));

    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    double fx = x - x0;
    double fy = y - y0;
    int x1 = (x0 + 1) % w;
    int y1 = std::min(y0 + 1, h - 1);
    x0 %= w;

    const float* p00 = map.pixel(x0, y0);
    const float* p10 = map.pixel(x1, y0);
    const float* p01 = map.pixel(x0, y1);
    const float* p11 = map.pixel(x1, y1);

    std::array<float, 3> out;
    for (int c = 0; c < 3; ++c) {
        double top = p00[c] * (1.0 - fx) + p10[c] * fx;
        double bot = p01[c] * (1.0 - fx) + p11[c] * fx;
        out[c] = static_cast<float>(top * (1.0 - fy) + bot * fy);
    }
    return out;
}

std::array<float, 3> sample_equirect(const RadianceMap& map, const Direction& d) {
    EquirectGrid grid{map.width, map.height};
    return sample_bilinear_wrap(map, grid.u_of(d), grid.v_of(d));
}

std::array<float, 3> sample_equirect_nearest(const RadianceMap& map, const Direction& d) {
    EquirectGrid grid{map.width, map.height};
    double u = grid.u_of(d);
    double v = grid.v_of(d);
    int x = static_cast<int>(std::lround(u));
    int y = static_cast<int>(std::lround(v));
    x = ((x % map.width) + map.width) % map.width;
    y = std::clamp(y, 0, map.height - 1);
    const float* p = map.pixel(x, y);
    return {p[0], p[1], p[2]};
}

namespace {

template <class Image>
Image resize_impl(const Image& src, int out_width, int out_height) {
    if (out_width <= 0 || out_height <= 0)
        throw std::invalid_argument("resize target must be positive");
    Image dst(out_width, out_height);
    const double sx = static_cast<double>(src.width) / out_width;
    const double sy = static_cast<double>(src.height) / out_height;
    for (int y = 0; y < out_height; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(src.height - 1));
        int y0 = static_cast<int>(std::floor(fy));
        int y1 = std::min(y0 + 1, src.height - 1);
        double wy = fy - y0;
        for (int x = 0; x < out_width; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(src.width - 1));
            int x0 = static_cast<int>(std::floor(fx));
            int x1 = std::min(x0 + 1, src.width - 1);
            double wx = fx - x0;
            const float* p00 = src.pixel(x0, y0);
            const float* p10 = src.pixel(x1, y0);
            const float* p01 = src.pixel(x0, y1);
            const float* p11 = src.pixel(x1, y1);
            float* out = dst.pixel(x, y);
            for (int c = 0; c < 3; ++c) {
                double top = p00[c] * (1.0 - wx) + p10[c] * wx;
                double bot = p01[c] * (1.0 - wx) + p11[c] * wx;
                out[c] = static_cast<float>(top * (1.0 - wy) + bot * wy);
            }
        }
    }
    return dst;
}

}  // namespace

RadianceMap resize_bilinear(const RadianceMap& src, int out_width, int out_height) {
    RadianceMap out = resize_impl(src, out_width, out_height);
    out.exposure_scale = src.exposure_scale;
    return out;
}

LdrImage resize_bilinear(const LdrImage& src, int out_width, int out_height) {
    return resize_impl(src, out_width, out_height);
}

}  // namespace shlight
