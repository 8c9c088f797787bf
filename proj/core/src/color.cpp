#include "shlight/color.hpp"

#include <algorithm>
#include <cmath>

namespace shlight {

namespace {

// D65 reference white
constexpr double kXn = 0.95047;
constexpr double kYn = 1.0;
constexpr double kZn = 1.08883;

constexpr double kDelta = 6.0 / 29.0;
constexpr double kDelta3 = kDelta * kDelta * kDelta;

double lab_f(double t) {
    return t > kDelta3 ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inv(double t) {
    return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0);
}

// chromaticity of the white point for CIELUV
const double kUn = 4.0 * kXn / (kXn + 15.0 * kYn + 3.0 * kZn);
const double kVn = 9.0 * kYn / (kXn + 15.0 * kYn + 3.0 * kZn);

}  // namespace

std::array<double, 3> rgb_to_xyz(const std::array<double, 3>& c) {
    return {0.4124564 * c[0] + 0.3575761 * c[1] + 0.1804375 * c[2],
            0.2126729 * c[0] + 0.7151522 * c[1] + 0.0721750 * c[2],
            0.0193339 * c[0] + 0.1191920 * c[1] + 0.9503041 * c[2]};
}

std::array<double, 3> xyz_to_rgb(const std::array<double, 3>& c) {
    return {3.2404542 * c[0] - 1.5371385 * c[1] - 0.4985314 * c[2],
            -0.9692660 * c[0] + 1.8760108 * c[1] + 0.0415560 * c[2],
            0.0556434 * c[0] - 0.2040259 * c[1] + 1.0572252 * c[2]};
}

double srgb_decode(double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double srgb_encode(double v) {
    return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

std::array<double, 3> xyz_to_lab(const std::array<double, 3>& xyz) {
    double fx = lab_f(xyz[0] / kXn);
    double fy = lab_f(xyz[1] / kYn);
    double fz = lab_f(xyz[2] / kZn);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::array<double, 3> lab_to_xyz(const std::array<double, 3>& lab) {
    double fy = (lab[0] + 16.0) / 116.0;
    double fx = fy + lab[1] / 500.0;
    double fz = fy - lab[2] / 200.0;
    return {kXn * lab_f_inv(fx), kYn * lab_f_inv(fy), kZn * lab_f_inv(fz)};
}

std::array<double, 3> xyz_to_luv(const std::array<double, 3>& xyz) {
    double L = 116.0 * lab_f(xyz[1] / kYn) - 16.0;
    double denom = xyz[0] + 15.0 * xyz[1] + 3.0 * xyz[2];
    // black has no chromaticity; treat it as neutral
    double up = denom > 0.0 ? 4.0 * xyz[0] / denom : kUn;
    double vp = denom > 0.0 ? 9.0 * xyz[1] / denom : kVn;
    return {L, 13.0 * L * (up - kUn), 13.0 * L * (vp - kVn)};
}

std::array<double, 3> luv_to_xyz(const std::array<double, 3>& luv) {
    double L = luv[0];
    if (L <= 0.0) return {0.0, 0.0, 0.0};
    double up = luv[1] / (13.0 * L) + kUn;
    double vp = luv[2] / (13.0 * L) + kVn;
    if (vp <= 1e-12) return {0.0, 0.0, 0.0};
    double Y = kYn * lab_f_inv((L + 16.0) / 116.0);
    double X = Y * 9.0 * up / (4.0 * vp);
    double Z = Y * (12.0 - 3.0 * up - 20.0 * vp) / (4.0 * vp);
    return {X, Y, Z};
}

LdrImage color_convert(const LdrImage& image, RgbEncoding from, ChromaSpace to) {
    const double chroma_scale = to == ChromaSpace::lab ? kLabChromaScale : kLuvChromaScale;
    LdrImage out(image.width, image.height);
    for (std::size_t i = 0; i < image.data.size(); i += 3) {
        std::array<double, 3> rgb{image.data[i], image.data[i + 1], image.data[i + 2]};
        if (from == RgbEncoding::gamma)
            for (double& v : rgb) v = srgb_decode(v);
        std::array<double, 3> xyz = rgb_to_xyz(rgb);
        std::array<double, 3> opp =
            to == ChromaSpace::lab ? xyz_to_lab(xyz) : xyz_to_luv(xyz);
        out.data[i] = static_cast<float>(opp[0] / 100.0);
        out.data[i + 1] = static_cast<float>(opp[1] / chroma_scale + 0.5);
        out.data[i + 2] = static_cast<float>(opp[2] / chroma_scale + 0.5);
    }
    return out;
}

LdrImage color_convert_back(const LdrImage& image, ChromaSpace from, RgbEncoding to) {
    const double chroma_scale = from == ChromaSpace::lab ? kLabChromaScale : kLuvChromaScale;
    LdrImage out(image.width, image.height);
    for (std::size_t i = 0; i < image.data.size(); i += 3) {
        std::array<double, 3> opp{image.data[i] * 100.0,
                                  (image.data[i + 1] - 0.5) * chroma_scale,
                                  (image.data[i + 2] - 0.5) * chroma_scale};
        std::array<double, 3> xyz =
            from == ChromaSpace::lab ? lab_to_xyz(opp) : luv_to_xyz(opp);
        std::array<double, 3> rgb = xyz_to_rgb(xyz);
        if (to == RgbEncoding::gamma)
            for (double& v : rgb) v = srgb_encode(std::max(0.0, v));
        for (int c = 0; c < 3; ++c)
            out.data[i + c] = static_cast<float>(std::clamp(rgb[c], 0.0, 1.0));
    }
    return out;
}

}  // namespace shlight
