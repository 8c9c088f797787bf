#pragma once

#include <array>

#include "shlight/image.hpp"
#include "shlight/metrics.hpp"
#include "shlight/model.hpp"
#include "shlight/sh.hpp"

namespace shlight {

// Orthographic front view of a diffuse unit sphere lit by irradiance
// coefficients; background stays black. The camera faces +x, image-right is
// +z and up is +y, matching the equirect center view.
RadianceMap render_sphere(const SHCoeffs& irradiance, int size,
                          std::array<double, 3> albedo = {1, 1, 1});

// Shades each pixel with the normal stored in a map (components in [-1, 1],
// zero-length entries are background).
RadianceMap render_normals(const SHCoeffs& irradiance, const RadianceMap& normal_map,
                           std::array<double, 3> albedo = {1, 1, 1});

double max_component(const RadianceMap& map);

// Display transform for HDR renders: scale, clamp, gamma-encode.
LdrImage display_tonemap(const RadianceMap& map, double scale, double gamma = 2.2);

// Per-sample evaluation over one split of a dataset: coefficient MSE in the
// normalized space plus NRMSE / chroma-SSIM error on diffuse-sphere renders
// of the de-normalized coefficients (both renders share the truth's display
// scale).
EvalReport evaluate_model(const Model& model, const Manifest& manifest,
                          const std::string& dataset_dir, const std::string& split,
                          int render_size = 128);

}  // namespace shlight
