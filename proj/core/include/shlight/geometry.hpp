#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace shlight {

inline constexpr double kPi = std::numbers::pi;

inline double radians(double degrees) { return degrees * kPi / 180.0; }
inline double degrees(double rad) { return rad * 180.0 / kPi; }

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        if (n <= 0.0) throw std::invalid_argument("cannot normalize zero vector");
        return {x / n, y / n, z / n};
    }
};

// Unit-length direction on the sphere.
//
// Every module shares one convention: +y is up (theta = 0 at the zenith),
// theta is the polar angle in [0, pi], phi the azimuth in [-pi, pi), and
//   x = sin(theta) cos(phi),  y = cos(theta),  z = sin(theta) sin(phi).
struct Direction {
    double x = 0.0, y = 1.0, z = 0.0;

    static Direction from_spherical(double theta, double phi) {
        double st = std::sin(theta);
        return {st * std::cos(phi), std::cos(theta), st * std::sin(phi)};
    }

    // Validates the unit-length invariant to 1e-9.
    static Direction from_unit(double x, double y, double z) {
        double n2 = x * x + y * y + z * z;
        if (std::abs(n2 - 1.0) > 1e-9)
            throw std::invalid_argument("direction is not unit length");
        return {x, y, z};
    }

    static Direction normalized(double x, double y, double z) {
        Vec3 v = Vec3{x, y, z}.normalized();
        return {v.x, v.y, v.z};
    }

    double theta() const { return std::acos(std::clamp(y, -1.0, 1.0)); }
    double phi() const { return std::atan2(z, x); }
    Vec3 vec() const { return {x, y, z}; }
};

// Row-major 3x3 matrix; enough rotation machinery for yaw/pitch composition.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return {}; }

    // Rotation about +y by `a` radians (right-handed).
    static Mat3 rotation_y(double a) {
        double c = std::cos(a), s = std::sin(a);
        return {{c, 0, s, 0, 1, 0, -s, 0, c}};
    }

    // Rotation about +z by `a` radians (right-handed).
    static Mat3 rotation_z(double a) {
        double c = std::cos(a), s = std::sin(a);
        return {{c, -s, 0, s, c, 0, 0, 0, 1}};
    }

    Vec3 apply(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Direction apply(const Direction& d) const {
        Vec3 r = apply(d.vec());
        return {r.x, r.y, r.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += m[3 * i + k] * o.m[3 * k + j];
                r.m[3 * i + j] = s;
            }
        return r;
    }
};

// Camera orientation used by both panorama rotation and perspective views.
// Yaw pans toward +z (the right half of a centered equirect image); pitch
// tilts the view up. Pitch is applied about the camera's right axis, i.e.
// the combined matrix is R_y(yaw) * R_right(pitch).
Mat3 yaw_pitch_rotation(double yaw_deg, double pitch_deg);

// Pixel-center angle mapping of a full-sphere equirectangular image:
//   theta(v) = pi (v + 0.5) / H,   phi(u) = 2 pi (u + 0.5) / W - pi.
struct EquirectGrid {
    int width = 0;
    int height = 0;

    double theta(double v) const { return kPi * (v + 0.5) / height; }
    double phi(double u) const { return 2.0 * kPi * (u + 0.5) / width - kPi; }

    Direction direction(double u, double v) const {
        return Direction::from_spherical(theta(v), phi(u));
    }

    // Continuous pixel coordinates of a direction (u may fall outside
    // [0, W); callers wrap).
    double u_of(const Direction& d) const {
        return (d.phi() + kPi) * width / (2.0 * kPi) - 0.5;
    }
    double v_of(const Direction& d) const { return d.theta() * height / kPi - 0.5; }

    // Solid angle represented by one pixel of row v.
    double solid_angle(int v) const {
        return std::sin(theta(v)) * (kPi / height) * (2.0 * kPi / width);
    }
};

}  // namespace shlight
