#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "shlight/image.hpp"
#include "shlight/random.hpp"

namespace shlight {

// Procedural stand-in for captured HDR panoramas: an ambient floor plus a
// few smooth-edged disc area lights and an optional low-amplitude texture.
struct SynthLight {
    Direction direction{0, 1, 0};
    double radius_deg = 20.0;              // angular radius, (2, 60)
    std::array<double, 3> radiance{1, 1, 1};
};

struct SynthLightSpec {
    std::array<double, 3> ambient{0.2, 0.2, 0.2};
    std::vector<SynthLight> lights;        // up to 4
    double texture_amplitude = 0.0;        // relative modulation of the ambient

    void validate() const;  // throws std::invalid_argument
};

// Deterministic per (spec, seed); the seed drives only the texture phases.
RadianceMap synth_panorama(const SynthLightSpec& spec, int width, int height, std::uint64_t seed);

// Random scene sampler used by `gen-dataset --synthetic`: ambient hue varies
// widely (so exposure-normalized views still carry the scene's color), one
// to three colored disc lights.
SynthLightSpec random_light_spec(Rng& rng);

// Scene with distinct lighting on the two azimuth halves (red on the left,
// blue on the right when facing the panorama center, or flipped).
SynthLightSpec split_color_spec(Rng& rng, bool red_left);

}  // namespace shlight
