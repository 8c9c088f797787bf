#include "shlight/synth.hpp"

#include <cmath>
#include <stdexcept>

#include "shlight/parallel.hpp"

namespace shlight {

void SynthLightSpec::validate() const {
    if (lights.size() > 4) throw std::invalid_argument("at most 4 synthetic lights");
    for (const auto& l : lights) {
        if (!(l.radius_deg > 2.0 && l.radius_deg < 60.0))
            throw std::invalid_argument("light angular radius must be in (2, 60) degrees");
        for (double v : l.radiance)
            if (!(v >= 0.0)) throw std::invalid_argument("light radiance must be >= 0");
    }
    for (double v : ambient)
        if (!(v >= 0.0)) throw std::invalid_argument("ambient must be >= 0");
    if (!(texture_amplitude >= 0.0 && texture_amplitude < 1.0))
        throw std::invalid_argument("texture amplitude must be in [0, 1)");
}

RadianceMap synth_panorama(const SynthLightSpec& spec, int width, int height,
                           std::uint64_t seed) {
    spec.validate();
    if (width < 4 || height < 2) throw std::invalid_argument("panorama too small");

    // three fixed sine plaids; phases and axes from the seed
    struct Wave {
        Vec3 axis;
        double freq;
        double phase;
    };
    std::array<Wave, 3> waves;
    {
        Rng rng(seed);
        for (auto& w : waves) {
            Direction d = rng.uniform_sphere();
            w.axis = d.vec();
            w.freq = rng.uniform(2.0, 6.0);
            w.phase = rng.uniform(0.0, 2.0 * kPi);
        }
    }

    struct DiscLight {
        Vec3 dir;
        double cos_outer;
        double cos_inner;
        std::array<double, 3> radiance;
    };
    std::vector<DiscLight> discs;
    for (const auto& l : spec.lights) {
        double outer = radians(l.radius_deg);
        double inner = outer * 0.75;  // smooth edge over the outer quarter
        discs.push_back({l.direction.vec(), std::cos(outer), std::cos(inner), l.radiance});
    }

    EquirectGrid grid{width, height};
    RadianceMap map(width, height);
    parallel_chunks(height, [&](std::size_t begin, std::size_t end) {
        for (std::size_t v = begin; v < end; ++v) {
            for (int u = 0; u < width; ++u) {
                Vec3 d = grid.direction(u, static_cast<double>(v)).vec();
                double tex = 0.0;
                if (spec.texture_amplitude > 0.0) {
                    for (const Wave& w : waves)
                        tex += std::sin(w.freq * d.dot(w.axis) + w.phase);
                    tex *= spec.texture_amplitude / 3.0;
                }
                float* p = map.pixel(u, static_cast<int>(v));
                for (int c = 0; c < 3; ++c) {
                    double s = spec.ambient[c] * (1.0 + tex);
                    for (const DiscLight& disc : discs) {
                        double cosang = d.dot(disc.dir);
                        if (cosang >= disc.cos_inner) {
                            s += disc.radiance[c];
                        } else if (cosang > disc.cos_outer) {
                            double f = (cosang - disc.cos_outer) /
                                       (disc.cos_inner - disc.cos_outer);
                            s += disc.radiance[c] * f * f * (3.0 - 2.0 * f);
                        }
                    }
                    p[c] = static_cast<float>(std::max(0.0, s));
                }
            }
        }
    });
    return map;
}

SynthLightSpec random_light_spec(Rng& rng) {
    SynthLightSpec spec;
    // hue varies much more than intensity so exposure-normalized views keep a
    // recoverable color signal
    double intensity = rng.uniform(0.25, 0.45);
    std::array<double, 3> hue{rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0),
                              rng.uniform(0.2, 1.0)};
    double hue_sum = hue[0] + hue[1] + hue[2];
    for (int c = 0; c < 3; ++c) spec.ambient[c] = 3.0 * intensity * hue[c] / hue_sum;
    spec.texture_amplitude = rng.uniform(0.02, 0.08);

    int n_lights = 1 + static_cast<int>(rng.uniform_index(3));
    for (int i = 0; i < n_lights; ++i) {
        SynthLight l;
        l.direction = rng.uniform_sphere();
        l.radius_deg = rng.uniform(15.0, 45.0);
        double power = rng.uniform(1.0, 5.0);
        l.radiance = {power * rng.uniform(0.4, 1.0), power * rng.uniform(0.4, 1.0),
                      power * rng.uniform(0.4, 1.0)};
        spec.lights.push_back(l);
    }
    return spec;
}

SynthLightSpec split_color_spec(Rng& rng, bool red_left) {
    SynthLightSpec spec;
    double base = rng.uniform(0.15, 0.3);
    spec.ambient = {base, base, base};
    spec.texture_amplitude = rng.uniform(0.02, 0.05);

    // Facing the panorama center (+x): image-left is -z, image-right is +z.
    double red_power = rng.uniform(1.5, 3.5);
    double blue_power = rng.uniform(1.5, 3.5);
    double elev = rng.uniform(-0.25, 0.45);

    SynthLight red;
    red.direction = Direction::normalized(0.35, elev, red_left ? -1.0 : 1.0);
    red.radius_deg = rng.uniform(30.0, 50.0);
    red.radiance = {red_power, red_power * 0.15, red_power * 0.1};

    SynthLight blue;
    blue.direction = Direction::normalized(0.35, elev, red_left ? 1.0 : -1.0);
    blue.radius_deg = rng.uniform(30.0, 50.0);
    blue.radiance = {blue_power * 0.1, blue_power * 0.15, blue_power};

    spec.lights = {red, blue};
    return spec;
}

}  // namespace shlight
