#include "shlight/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "shlight/color.hpp"

namespace shlight {

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile of an empty list");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("percentile must be in [0, 1]");
    std::sort(values.begin(), values.end());
    double pos = p * (static_cast<double>(values.size()) - 1.0);
    std::size_t lo = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double mse_coeffs(const SHCoeffs& pred, const SHCoeffs& truth) {
    if (pred.order() != truth.order())
        throw std::invalid_argument("coefficient MSE requires matching orders");
    if (pred.domain() != truth.domain())
        throw std::invalid_argument("coefficient MSE requires matching domains");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.values().size(); ++i) {
        double d = pred.values()[i] - truth.values()[i];
        sum += d * d;
    }
    return sum / static_cast<double>(pred.values().size());
}

double nrmse_image(const LdrImage& pred, const LdrImage& truth) {
    if (pred.width != truth.width || pred.height != truth.height)
        throw std::invalid_argument("NRMSE requires equal image dimensions");
    double sum = 0.0;
    float lo = truth.data.empty() ? 0.0f : truth.data[0];
    float hi = lo;
    bool equal = true;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        double d = static_cast<double>(pred.data[i]) - truth.data[i];
        sum += d * d;
        lo = std::min(lo, truth.data[i]);
        hi = std::max(hi, truth.data[i]);
        if (pred.data[i] != truth.data[i]) equal = false;
    }
    double range = static_cast<double>(hi) - lo;
    if (range == 0.0) {
        if (equal) return 0.0;
        throw std::invalid_argument("NRMSE undefined: truth has zero value range");
    }
    return std::sqrt(sum / static_cast<double>(pred.data.size())) / range;
}

GrayImage channel_of(const LdrImage& image, int channel) {
    GrayImage g;
    g.width = image.width;
    g.height = image.height;
    g.data.resize(static_cast<std::size_t>(image.width) * image.height);
    for (std::size_t i = 0; i < g.data.size(); ++i)
        g.data[i] = image.data[i * 3 + static_cast<std::size_t>(channel)];
    return g;
}

double ssim(const GrayImage& a, const GrayImage& b) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("SSIM requires equal image dimensions");
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    constexpr double kC1 = 0.01 * 0.01;  // (K1 L)^2, L = 1
    constexpr double kC2 = 0.03 * 0.03;
    if (a.width < kWin || a.height < kWin)
        throw std::invalid_argument("SSIM needs images of at least 11x11");

    // normalized 2-D Gaussian window
    double window[kWin][kWin];
    double wsum = 0.0;
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
            double dy = i - (kWin - 1) / 2.0;
            double dx = j - (kWin - 1) / 2.0;
            window[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
            wsum += window[i][j];
        }
    for (auto& row : window)
        for (double& w : row) w /= wsum;

    double total = 0.0;
    std::size_t count = 0;
    for (int y = 0; y + kWin <= a.height; ++y)
        for (int x = 0; x + kWin <= a.width; ++x) {
            double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    double w = window[i][j];
                    double va = a.data[static_cast<std::size_t>(y + i) * a.width + (x + j)];
                    double vb = b.data[static_cast<std::size_t>(y + i) * b.width + (x + j)];
                    mu_a += w * va;
                    mu_b += w * vb;
                    aa += w * va * va;
                    bb += w * vb * vb;
                    ab += w * va * vb;
                }
            double var_a = aa - mu_a * mu_a;
            double var_b = bb - mu_b * mu_b;
            double cov = ab - mu_a * mu_b;
            double s = ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
                       ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
            total += s;
            ++count;
        }
    return total / static_cast<double>(count);
}

double ssime_chroma(const LdrImage& pred, const LdrImage& truth) {
    if (pred.width != truth.width || pred.height != truth.height)
        throw std::invalid_argument("SSIME requires equal image dimensions");
    LdrImage lab_pred = color_convert(pred, RgbEncoding::gamma, ChromaSpace::lab);
    LdrImage lab_truth = color_convert(truth, RgbEncoding::gamma, ChromaSpace::lab);
    double sa = ssim(channel_of(lab_pred, 1), channel_of(lab_truth, 1));
    double sb = ssim(channel_of(lab_pred, 2), channel_of(lab_truth, 2));
    return 1.0 - 0.5 * (sa + sb);
}

EvalReport EvalReport::from_rows(std::vector<EvalRow> rows) {
    EvalReport r;
    r.rows = std::move(rows);
    if (r.rows.empty()) throw std::invalid_argument("evaluation produced no rows");

    std::vector<double> mses;
    double nrmse_sum = 0, ssime_sum = 0;
    for (const EvalRow& row : r.rows) {
        mses.push_back(row.mse);
        nrmse_sum += row.nrmse;
        ssime_sum += row.ssime;
    }
    const double n = static_cast<double>(r.rows.size());
    double mse_sum = 0;
    for (double m : mses) mse_sum += m;
    r.mse_mean = mse_sum / n;
    r.mse_q25 = percentile(mses, 0.25);
    r.mse_q50 = percentile(mses, 0.50);
    r.mse_q75 = percentile(mses, 0.75);
    r.nrmse_mean = nrmse_sum / n;
    r.ssime_mean = ssime_sum / n;

    double nrmse_var = 0, ssime_var = 0;
    for (const EvalRow& row : r.rows) {
        nrmse_var += (row.nrmse - r.nrmse_mean) * (row.nrmse - r.nrmse_mean);
        ssime_var += (row.ssime - r.ssime_mean) * (row.ssime - r.ssime_mean);
    }
    r.nrmse_sd = std::sqrt(nrmse_var / n);
    r.ssime_sd = std::sqrt(ssime_var / n);
    return r;
}

std::string EvalReport::to_json() const {
    nlohmann::json j = {{"samples", rows.size()},
                        {"mse", {{"mean", mse_mean}, {"q25", mse_q25}, {"q50", mse_q50},
                                 {"q75", mse_q75}}},
                        {"nrmse", {{"mean", nrmse_mean}, {"sd", nrmse_sd}}},
                        {"ssime", {{"mean", ssime_mean}, {"sd", ssime_sd}}}};
    return j.dump(2);
}

std::string EvalReport::to_csv() const {
    std::ostringstream out;
    out << "panorama_id,view_index,mse,nrmse,ssime\n";
    for (const EvalRow& r : rows)
        out << r.panorama_id << "," << r.view_index << "," << r.mse << "," << r.nrmse << ","
            << r.ssime << "\n";
    return out.str();
}

}  // namespace shlight
