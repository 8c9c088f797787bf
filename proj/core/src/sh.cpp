#include "shlight/sh.hpp"

#include <cmath>
#include <stdexcept>

#include "shlight/errors.hpp"
#include "shlight/parallel.hpp"
#include "shlight/random.hpp"

namespace shlight {

SHCoeffs::SHCoeffs(int order, SHDomain domain) : order_(order), domain_(domain) {
    if (order < 0 || order > kMaxShOrder)
        throw std::invalid_argument("SH order must be in [0, " + std::to_string(kMaxShOrder) + "]");
    values_.assign(3 * static_cast<std::size_t>(count()), 0.0);
}

SHCoeffs SHCoeffs::operator*(double s) const {
    SHCoeffs r = *this;
    for (double& v : r.values_) v *= s;
    return r;
}

SHCoeffs SHCoeffs::operator+(const SHCoeffs& o) const {
    if (o.order_ != order_) throw std::invalid_argument("SH order mismatch");
    SHCoeffs r = *this;
    for (std::size_t i = 0; i < values_.size(); ++i) r.values_[i] += o.values_[i];
    return r;
}

double SHCoeffs::band_power(int channel, int band) const {
    double p = 0.0;
    for (int m = -band; m <= band; ++m) {
        double v = at(channel, band * (band + 1) + m);
        p += v * v;
    }
    return p;
}

SHCoeffs SHCoeffs::truncated(int new_order) const {
    if (new_order > order_) throw std::invalid_argument("cannot truncate to a higher order");
    SHCoeffs r(new_order, domain_);
    for (int ch = 0; ch < 3; ++ch)
        for (int i = 0; i < r.count(); ++i) r.at(ch, i) = at(ch, i);
    return r;
}

double SHCoeffs::max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

namespace {

// K(l, m) = sqrt((2l+1)/(4 pi) * (l-m)!/(l+m)!)
double sh_normalization(int l, int m) {
    double num = (2.0 * l + 1.0) / (4.0 * kPi);
    for (int k = l - m + 1; k <= l + m; ++k) num /= k;
    return std::sqrt(num);
}

}  // namespace

void sh_basis_eval_into(const Direction& dir, int order, double* out) {
    // The SH polar axis is z; m = 0 terms are polynomials in z, and the
    // azimuthal factors come from powers of (x + i y). sin^m(theta) is
    // folded into those powers, so the Legendre part P~ below is the
    // associated Legendre function divided by sin^m(theta) - a plain
    // polynomial in z, evaluated by the usual three-term recurrence
    // (no Condon-Shortley phase anywhere).
    const double px = dir.x, py = dir.y, pz = dir.z;

    // cos/sin azimuth stacks: C[m] = Re((x+iy)^m), S[m] = Im((x+iy)^m)
    double C[kMaxShOrder + 1], S[kMaxShOrder + 1];
    C[0] = 1.0;
    S[0] = 0.0;
    for (int m = 1; m <= order; ++m) {
        C[m] = px * C[m - 1] - py * S[m - 1];
        S[m] = px * S[m - 1] + py * C[m - 1];
    }

    // P~[l][m]
    double P[kMaxShOrder + 1][kMaxShOrder + 1];
    double pmm = 1.0;  // (2m-1)!!
    for (int m = 0; m <= order; ++m) {
        if (m > 0) pmm *= 2 * m - 1;
        P[m][m] = pmm;
        if (m + 1 <= order) P[m + 1][m] = pz * (2 * m + 1) * P[m][m];
        for (int l = m + 2; l <= order; ++l)
            P[l][m] = (pz * (2 * l - 1) * P[l - 1][m] - (l + m - 1) * P[l - 2][m]) / (l - m);
    }

    const double sqrt2 = std::sqrt(2.0);
    for (int l = 0; l <= order; ++l) {
        out[l * (l + 1)] = sh_normalization(l, 0) * P[l][0];
        for (int m = 1; m <= l; ++m) {
            double k = sqrt2 * sh_normalization(l, m) * P[l][m];
            out[l * (l + 1) + m] = k * C[m];
            out[l * (l + 1) - m] = k * S[m];
        }
    }
}

std::vector<double> sh_basis_eval(const Direction& dir, int order) {
    if (order < 0 || order > kMaxShOrder)
        throw std::invalid_argument("SH order must be in [0, " + std::to_string(kMaxShOrder) + "]");
    double n2 = dir.x * dir.x + dir.y * dir.y + dir.z * dir.z;
    if (std::abs(n2 - 1.0) > 1e-9)
        throw std::invalid_argument("sh_basis_eval requires a unit direction");
    std::vector<double> out(static_cast<std::size_t>(order + 1) * (order + 1));
    sh_basis_eval_into(dir, order, out.data());
    return out;
}

SHCoeffs project_panorama(const RadianceMap& map, int order) {
    if (order < 0 || order > kMaxShOrder)
        throw std::invalid_argument("SH order must be in [0, " + std::to_string(kMaxShOrder) + "]");
    if (map.width < 1 || map.height < 1) throw std::invalid_argument("empty panorama");
    validate_finite(map);

    const int n = (order + 1) * (order + 1);
    const int h = map.height, w = map.width;
    const EquirectGrid grid{w, h};

    // Row partials; each row is summed left to right, rows are merged by
    // pairwise summation afterwards, so the reduction order is fixed no
    // matter how many threads ran.
    std::vector<double> rows(static_cast<std::size_t>(h) * 3 * n, 0.0);
    parallel_chunks(h, [&](std::size_t begin, std::size_t end) {
        std::vector<double> basis(n);
        for (std::size_t v = begin; v < end; ++v) {
            double* acc = rows.data() + v * 3 * n;
            const double dw = grid.solid_angle(static_cast<int>(v));
            for (int u = 0; u < w; ++u) {
                sh_basis_eval_into(grid.direction(u, static_cast<double>(v)), order, basis.data());
                const float* p = map.pixel(u, static_cast<int>(v));
                for (int i = 0; i < n; ++i) {
                    double by = basis[i] * dw;
                    acc[i] += p[0] * by;
                    acc[n + i] += p[1] * by;
                    acc[2 * n + i] += p[2] * by;
                }
            }
        }
    });

    SHCoeffs out(order, SHDomain::radiance);
    std::vector<double> column(h);
    for (int ch = 0; ch < 3; ++ch)
        for (int i = 0; i < n; ++i) {
            for (int v = 0; v < h; ++v) column[v] = rows[static_cast<std::size_t>(v) * 3 * n + ch * n + i];
            out.at(ch, i) = pairwise_sum(column);
        }
    return out;
}

SHCoeffs mc_project_oracle(const RadianceMap& map, int order, std::int64_t n_samples,
                           std::uint64_t seed) {
    if (order < 0 || order > kMaxShOrder)
        throw std::invalid_argument("SH order must be in [0, " + std::to_string(kMaxShOrder) + "]");
    if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
    validate_finite(map);

    const int n = (order + 1) * (order + 1);
    SHCoeffs out(order, SHDomain::radiance);
    std::vector<double> basis(n);
    Rng rng(seed);
    for (std::int64_t s = 0; s < n_samples; ++s) {
        Direction d = rng.uniform_sphere();
        sh_basis_eval_into(d, order, basis.data());
        std::array<float, 3> L = sample_equirect_nearest(map, d);
        for (int ch = 0; ch < 3; ++ch)
            for (int i = 0; i < n; ++i) out.at(ch, i) += L[ch] * basis[i];
    }
    const double scale = 4.0 * kPi / static_cast<double>(n_samples);
    for (double& v : out.values()) v *= scale;
    return out;
}

double cosine_lobe_band_factor(int band) {
    switch (band) {
        case 0: return kPi;
        case 1: return 2.0 * kPi / 3.0;
        case 2: return kPi / 4.0;
        case 3: return 0.0;
        case 4: return -kPi / 24.0;
        default: throw std::invalid_argument("band out of range");
    }
}

SHCoeffs convolve_irradiance(const SHCoeffs& c) {
    if (c.domain() != SHDomain::radiance)
        throw invalid_state("convolve_irradiance requires radiance-domain coefficients");
    SHCoeffs out(c.order(), SHDomain::irradiance);
    for (int ch = 0; ch < 3; ++ch)
        for (int l = 0; l <= c.order(); ++l) {
            double f = cosine_lobe_band_factor(l);
            for (int m = -l; m <= l; ++m) {
                int i = l * (l + 1) + m;
                out.at(ch, i) = f * c.at(ch, i);
            }
        }
    return out;
}

RadianceMap reconstruct_envmap(const SHCoeffs& c, int width, int height) {
    if (width < 4 || height < 4) throw std::invalid_argument("envmap must be at least 4x4");
    const int n = c.count();
    const EquirectGrid grid{width, height};
    RadianceMap map(width, height);
    parallel_chunks(height, [&](std::size_t begin, std::size_t end) {
        std::vector<double> basis(n);
        for (std::size_t v = begin; v < end; ++v) {
            for (int u = 0; u < width; ++u) {
                sh_basis_eval_into(grid.direction(u, static_cast<double>(v)), c.order(),
                                   basis.data());
                float* p = map.pixel(u, static_cast<int>(v));
                for (int ch = 0; ch < 3; ++ch) {
                    double s = 0.0;
                    for (int i = 0; i < n; ++i) s += c.at(ch, i) * basis[i];
                    p[ch] = static_cast<float>(s);
                }
            }
        }
    });
    return map;
}

std::array<double, 3> shade_diffuse(const SHCoeffs& c, const Direction& normal,
                                    const std::array<double, 3>& albedo) {
    if (c.domain() != SHDomain::irradiance)
        throw invalid_state("shade_diffuse requires irradiance-domain coefficients");
    const int n = c.count();
    std::vector<double> basis(n);
    sh_basis_eval_into(normal, c.order(), basis.data());
    std::array<double, 3> out;
    for (int ch = 0; ch < 3; ++ch) {
        double e = 0.0;
        for (int i = 0; i < n; ++i) e += c.at(ch, i) * basis[i];
        out[ch] = std::max(0.0, albedo[ch] / kPi * e);
    }
    return out;
}

}  // namespace shlight
