#pragma once

#include <string>
#include <vector>

#include "shlight/image.hpp"
#include "shlight/sh.hpp"

namespace shlight {

// Linear-interpolation percentile (same convention as numpy's default);
// p in [0, 1]. Sorts a copy.
double percentile(std::vector<double> values, double p);

// Mean over all coefficients of the squared difference. Inputs must share
// order and domain.
double mse_coeffs(const SHCoeffs& pred, const SHCoeffs& truth);

// RMSE over all channels divided by the truth value range (max - min).
// A range-zero truth is 0 when the images are equal and an error otherwise.
double nrmse_image(const LdrImage& pred, const LdrImage& truth);

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;
};

GrayImage channel_of(const LdrImage& image, int channel);

// Mean local SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
// dynamic range 1. Windows that fall off the image are skipped, so inputs
// must be at least 11x11.
double ssim(const GrayImage& a, const GrayImage& b);

// 1 - mean(ssim(a*), ssim(b*)) over the scaled CIELAB chroma channels;
// 0 for images with identical chroma.
double ssime_chroma(const LdrImage& pred, const LdrImage& truth);

struct EvalRow {
    std::string panorama_id;
    int view_index = 0;
    double mse = 0.0;
    double nrmse = 0.0;
    double ssime = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double mse_mean = 0.0;
    double mse_q25 = 0.0;
    double mse_q50 = 0.0;
    double mse_q75 = 0.0;
    double nrmse_mean = 0.0;
    double nrmse_sd = 0.0;
    double ssime_mean = 0.0;
    double ssime_sd = 0.0;

    static EvalReport from_rows(std::vector<EvalRow> rows);
    std::string to_json() const;
    std::string to_csv() const;
};

}  // namespace shlight
