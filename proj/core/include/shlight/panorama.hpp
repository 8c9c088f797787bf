#pragma once

#include "shlight/geometry.hpp"
#include "shlight/image.hpp"

namespace shlight {

// Perspective camera looking into a panorama. Yaw/pitch are the simulated
// head orientation; the projected view itself is taken along the rotated
// panorama's center axis.
struct CameraSpec {
    double yaw_deg = 0.0;             // [-180, 180]
    double pitch_deg = 0.0;           // [-15, 15]
    double horizontal_fov_deg = 90.0; // (10, 170)
    int out_width = 256;
    int out_height = 192;

    double vertical_fov_deg() const;
    void validate() const;  // throws std::invalid_argument
};

// Resamples the panorama so that the content at (yaw, pitch) lands at the
// image center: the output pixel at direction d takes the input value at
// M * d with M = R_yaw * R_pitch (pitch about the camera's right axis).
// Bilinear, wraps in azimuth, clamps at the poles.
RadianceMap rotate_panorama(const RadianceMap& map, double yaw_deg, double pitch_deg);

// Camera translation under the unit-sphere scene assumption. The camera
// moves by p = t * n_beta, with n_beta the direction at angle beta from
// nadir inside the vertical forward plane (beta = 0 points straight down,
// beta = 90 points at the panorama center). Each output direction d samples
// the input at the sphere point hit by the ray (p, d). t must be in [0, 1).
RadianceMap warp_panorama(const RadianceMap& map, double beta_deg, double t);

// Angle from nadir of the lowest scene point visible in the view: the
// optical axis sits at `pitch`, the view extends vfov/2 below it.
double beta_from_camera(const CameraSpec& cam);

// Pinhole projection of the panorama: focal = (W/2) / tan(hfov/2), rays
// rotated by the camera yaw/pitch, bilinear panorama lookup.
RadianceMap project_perspective(const RadianceMap& map, const CameraSpec& cam);

// out = clamp((exposure * in)^(1/gamma), 0, 1), applied per channel.
LdrImage tonemap_gamma(const RadianceMap& view, double exposure, double gamma = 2.2);

// Exposure that maps the view's given luminance percentile to `target`
// after gamma encoding. Deterministic; returns 1 for an all-black view.
double auto_exposure(const RadianceMap& view, double percentile = 0.90, double target = 0.80,
                     double gamma = 2.2);

// Rec. 709 luma of linear RGB.
double luminance(const float* rgb);

}  // namespace shlight
