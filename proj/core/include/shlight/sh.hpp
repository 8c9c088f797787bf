#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "shlight/geometry.hpp"
#include "shlight/image.hpp"

namespace shlight {

inline constexpr int kMaxShOrder = 4;

enum class SHDomain { radiance, irradiance };

// Real spherical-harmonics coefficients for three color channels, stored
// channel-major: values[channel * count + i] with i = l(l+1) + m.
class SHCoeffs {
public:
    SHCoeffs() : SHCoeffs(2, SHDomain::radiance) {}
    SHCoeffs(int order, SHDomain domain);

    int order() const { return order_; }
    int count() const { return (order_ + 1) * (order_ + 1); }
    SHDomain domain() const { return domain_; }
    void set_domain(SHDomain d) { domain_ = d; }

    double& at(int channel, int i) { return values_[channel * count() + i]; }
    double at(int channel, int i) const { return values_[channel * count() + i]; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    SHCoeffs operator*(double s) const;
    SHCoeffs operator+(const SHCoeffs& o) const;

    // Sum over m of c_{l,m}^2 for one channel; invariant under rotation.
    double band_power(int channel, int band) const;

    // Keeps bands 0..new_order, drops the rest.
    SHCoeffs truncated(int new_order) const;

    double max_abs() const;

private:
    int order_;
    SHDomain domain_;
    std::vector<double> values_;  // 3 * count()
};

// Real SH basis values at a unit direction, index order i = l(l+1) + m,
// no Condon-Shortley phase. Pinned constants for the low bands:
//   Y00 = 0.282095; band 1 = 0.488603 * {y, z, x};
//   band 2 = 1.092548 * {xy, yz, xz}, 0.315392 (3z^2 - 1), 0.546274 (x^2 - y^2).
// Orders 3 and 4 come from the associated-Legendre recurrence with the same
// normalization; the orthonormality of the whole set is checked by
// quadrature in the tests rather than trusted.
std::vector<double> sh_basis_eval(const Direction& dir, int order);

// Same, writing into a caller buffer of size (order+1)^2; skips the
// unit-length check. Hot path for projection/reconstruction loops.
void sh_basis_eval_into(const Direction& dir, int order, double* out);

// Quadrature projection of a full-sphere panorama:
//   c_i = sum_pixels L(u,v) Y_i(omega(u,v)) sin(theta) dtheta dphi.
// Parallelizes over rows; row partials are reduced by fixed-order pairwise
// summation so results are identical run to run and across thread counts.
SHCoeffs project_panorama(const RadianceMap& map, int order);

// Independent Monte-Carlo estimate of the same integral: uniform sphere
// directions, (4 pi / N) sum L(omega_j) Y_i(omega_j), nearest-pixel lookup.
// Deterministic for a fixed seed.
SHCoeffs mc_project_oracle(const RadianceMap& map, int order, std::int64_t n_samples,
                           std::uint64_t seed);

// Per-band scaling by the clamped-cosine kernel: A0 = pi, A1 = 2 pi / 3,
// A2 = pi / 4, A3 = 0, A4 = -pi / 24. Input must be radiance-domain.
SHCoeffs convolve_irradiance(const SHCoeffs& c);

// Band scale factor used by convolve_irradiance (exposed for the render loss).
double cosine_lobe_band_factor(int band);

// Evaluates the expansion on an equirect grid; linear in the coefficients.
RadianceMap reconstruct_envmap(const SHCoeffs& c, int width, int height);

// albedo / pi * sum_i c_i Y_i(normal), clamped at zero below. Input must be
// irradiance-domain.
std::array<double, 3> shade_diffuse(const SHCoeffs& c, const Direction& normal,
                                    const std::array<double, 3>& albedo);

// SH coefficient JSON file:
// {order, convention: "real-sh-no-cs", domain, channels: ["R","G","B"],
//  values: [channel][i]}.
void save_sh_json(const std::string& path, const SHCoeffs& c);
SHCoeffs load_sh_json(const std::string& path);
std::string sh_to_json(const SHCoeffs& c);
SHCoeffs sh_from_json(const std::string& text);

}  // namespace shlight
