#include "shlight/panorama.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "shlight/parallel.hpp"

namespace shlight {

Mat3 yaw_pitch_rotation(double yaw_deg, double pitch_deg) {
    // Forward at identity is +x; positive yaw pans toward +z (image right),
    // positive pitch lifts the forward axis toward +y. Pitch composes on the
    // right, i.e. it acts about the camera's own right axis.
    return Mat3::rotation_y(-radians(yaw_deg)) * Mat3::rotation_z(radians(pitch_deg));
}

double CameraSpec::vertical_fov_deg() const {
    double half_h = std::tan(radians(horizontal_fov_deg) / 2.0);
    double half_v = half_h * static_cast<double>(out_height) / out_width;
    return degrees(2.0 * std::atan(half_v));
}

void CameraSpec::validate() const {
    if (yaw_deg < -180.0 || yaw_deg > 180.0)
        throw std::invalid_argument("camera yaw must be in [-180, 180] degrees");
    if (pitch_deg < -15.0 || pitch_deg > 15.0)
        throw std::invalid_argument("camera pitch must be in [-15, 15] degrees");
    if (horizontal_fov_deg <= 10.0 || horizontal_fov_deg >= 170.0)
        throw std::invalid_argument("horizontal fov must be in (10, 170) degrees");
    if (out_width < 1 || out_height < 1)
        throw std::invalid_argument("output size must be positive");
}

namespace {

void require_panorama(const RadianceMap& map, const char* op) {
    if (!map.is_panorama())
        throw std::invalid_argument(std::string(op) + " requires a full equirectangular panorama (width == 2 * height)");
}

}  // namespace

RadianceMap rotate_panorama(const RadianceMap& map, double yaw_deg, double pitch_deg) {
    require_panorama(map, "rotate_panorama");
    validate_finite(map);

    const Mat3 m = yaw_pitch_rotation(yaw_deg, pitch_deg);
    const EquirectGrid grid{map.width, map.height};
    RadianceMap out(map.width, map.height);
    out.exposure_scale = map.exposure_scale;

    parallel_chunks(map.height, [&](std::size_t begin, std::size_t end) {
        for (std::size_t v = begin; v < end; ++v) {
            for (int u = 0; u < map.width; ++u) {
                Direction d = grid.direction(u, static_cast<double>(v));
                std::array<float, 3> rgb = sample_equirect(map, m.apply(d));
                float* p = out.pixel(u, static_cast<int>(v));
                p[0] = rgb[0];
                p[1] = rgb[1];
                p[2] = rgb[2];
            }
        }
    });
    return out;
}

RadianceMap warp_panorama(const RadianceMap& map, double beta_deg, double t) {
    require_panorama(map, "warp_panorama");
    if (!(t >= 0.0 && t < 1.0))
        throw std::invalid_argument("warp translation t must be in [0, 1)");
    validate_finite(map);

    // Nadir is -y; beta swings the translation direction within the
    // vertical plane that contains the forward axis (+x).
    const double beta = radians(beta_deg);
    const Vec3 p{t * std::sin(beta), -t * std::cos(beta), 0.0};

    const EquirectGrid grid{map.width, map.height};
    RadianceMap out(map.width, map.height);
    out.exposure_scale = map.exposure_scale;

    parallel_chunks(map.height, [&](std::size_t begin, std::size_t end) {
        for (std::size_t v = begin; v < end; ++v) {
            for (int u = 0; u < map.width; ++u) {
                Vec3 d = grid.direction(u, static_cast<double>(v)).vec();
                // positive root of |p + lambda d| = 1
                double b = p.dot(d);
                double c = p.dot(p) - 1.0;
                double lambda = -b + std::sqrt(b * b - c);
                Vec3 s = p + d * lambda;  // on the unit sphere
                std::array<float, 3> rgb = sample_equirect(map, Direction{s.x, s.y, s.z});
                float* q = out.pixel(u, static_cast<int>(v));
                q[0] = rgb[0];
                q[1] = rgb[1];
                q[2] = rgb[2];
            }
        }
    });
    return out;
}

double beta_from_camera(const CameraSpec& cam) {
    double beta = 90.0 + cam.pitch_deg - cam.vertical_fov_deg() / 2.0;
    return std::clamp(beta, 0.0, 180.0);
}

RadianceMap project_perspective(const RadianceMap& map, const CameraSpec& cam) {
    require_panorama(map, "project_perspective");
    cam.validate();
    validate_finite(map);

    const int w = cam.out_width, h = cam.out_height;
    const double focal = (w / 2.0) / std::tan(radians(cam.horizontal_fov_deg) / 2.0);
    const Mat3 m = yaw_pitch_rotation(cam.yaw_deg, cam.pitch_deg);

    RadianceMap out(w, h);
    out.exposure_scale = map.exposure_scale;
    parallel_chunks(h, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double y_px = h / 2.0 - (static_cast<double>(i) + 0.5);
            for (int j = 0; j < w; ++j) {
                double x_px = (j + 0.5) - w / 2.0;
                // forward +x, up +y, image-right +z
                Vec3 local{focal, y_px, x_px};
                Vec3 world = m.apply(local).normalized();
                std::array<float, 3> rgb =
                    sample_equirect(map, Direction{world.x, world.y, world.z});
                float* p = out.pixel(j, static_cast<int>(i));
                p[0] = rgb[0];
                p[1] = rgb[1];
                p[2] = rgb[2];
            }
        }
    });
    return out;
}

double luminance(const float* rgb) {
    return 0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2];
}

LdrImage tonemap_gamma(const RadianceMap& view, double exposure, double gamma) {
    if (!(exposure > 0.0)) throw std::invalid_argument("exposure must be > 0");
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be > 0");
    validate_finite(view);

    LdrImage out(view.width, view.height);
    const double inv_gamma = 1.0 / gamma;
    for (std::size_t i = 0; i < view.data.size(); ++i) {
        double v = std::max(0.0, exposure * static_cast<double>(view.data[i]));
        out.data[i] = static_cast<float>(std::clamp(std::pow(v, inv_gamma), 0.0, 1.0));
    }
    return out;
}

double auto_exposure(const RadianceMap& view, double percentile, double target, double gamma) {
    if (!(percentile > 0.0 && percentile < 1.0))
        throw std::invalid_argument("percentile must be in (0, 1)");
    if (!(target > 0.0 && target <= 1.0)) throw std::invalid_argument("target must be in (0, 1]");
    validate_finite(view);

    std::vector<double> luma;
    luma.reserve(static_cast<std::size_t>(view.width) * view.height);
    for (int y = 0; y < view.height; ++y)
        for (int x = 0; x < view.width; ++x) luma.push_back(luminance(view.pixel(x, y)));
    std::sort(luma.begin(), luma.end());

    // linear-interpolation percentile, same convention as the metric quartiles
    double pos = percentile * (static_cast<double>(luma.size()) - 1.0);
    std::size_t lo = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(lo);
    double anchor = luma[lo];
    if (lo + 1 < luma.size()) anchor += frac * (luma[lo + 1] - luma[lo]);

    if (anchor <= 0.0) return 1.0;
    // (exposure * anchor)^(1/gamma) == target
    return std::pow(target, gamma) / anchor;
}

}  // namespace shlight
