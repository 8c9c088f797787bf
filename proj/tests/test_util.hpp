#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "shlight/geometry.hpp"
#include "shlight/image.hpp"
#include "shlight/random.hpp"

namespace shtest {

// Smooth positive panorama built directly from cosine-power lobes; kept
// independent of the SH code paths it is used to exercise.
inline shlight::RadianceMap smooth_panorama(std::uint64_t seed, int width, int height,
                                            int n_lobes = 3) {
    shlight::Rng rng(seed);
    struct Lobe {
        shlight::Vec3 dir;
        double power;
        std::array<double, 3> gain;
    };
    std::vector<Lobe> lobes;
    for (int i = 0; i < n_lobes; ++i) {
        shlight::Direction d = rng.uniform_sphere();
        lobes.push_back({{d.x, d.y, d.z},
                         rng.uniform(1.0, 6.0),
                         {rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5)}});
    }
    std::array<double, 3> ambient{rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5),
                                  rng.uniform(0.1, 0.5)};

    shlight::RadianceMap map(width, height);
    shlight::EquirectGrid grid{width, height};
    for (int v = 0; v < height; ++v)
        for (int u = 0; u < width; ++u) {
            shlight::Vec3 d = grid.direction(u, v).vec();
            float* p = map.pixel(u, v);
            for (int c = 0; c < 3; ++c) {
                double s = ambient[c];
                for (const Lobe& l : lobes)
                    s += l.gain[c] * std::pow(std::max(0.0, d.dot(l.dir)), l.power);
                p[c] = static_cast<float>(s);
            }
        }
    return map;
}

inline double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

inline double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

inline double mean_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
    return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}

}  // namespace shtest
