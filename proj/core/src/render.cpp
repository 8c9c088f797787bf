#include "shlight/render.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "shlight/image_io.hpp"
#include "shlight/parallel.hpp"

namespace shlight {

namespace fs = std::filesystem;

RadianceMap render_sphere(const SHCoeffs& irradiance, int size, std::array<double, 3> albedo) {
    if (size < 8) throw std::invalid_argument("sphere render must be at least 8x8");
    RadianceMap out(size, size);
    const double half = size / 2.0;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            double up = (half - (i + 0.5)) / half;
            double right = ((j + 0.5) - half) / half;
            double rr = up * up + right * right;
            if (rr > 1.0) continue;
            double front = std::sqrt(1.0 - rr);
            Direction n{front, up, right};
            auto rgb = shade_diffuse(irradiance, n, albedo);
            float* p = out.pixel(j, i);
            for (int c = 0; c < 3; ++c) p[c] = static_cast<float>(rgb[c]);
        }
    return out;
}

RadianceMap render_normals(const SHCoeffs& irradiance, const RadianceMap& normal_map,
                           std::array<double, 3> albedo) {
    RadianceMap out(normal_map.width, normal_map.height);
    for (int y = 0; y < normal_map.height; ++y)
        for (int x = 0; x < normal_map.width; ++x) {
            const float* nv = normal_map.pixel(x, y);
            double len = std::sqrt(static_cast<double>(nv[0]) * nv[0] +
                                   static_cast<double>(nv[1]) * nv[1] +
                                   static_cast<double>(nv[2]) * nv[2]);
            if (len < 1e-6) continue;  // background
            Direction n{nv[0] / len, nv[1] / len, nv[2] / len};
            auto rgb = shade_diffuse(irradiance, n, albedo);
            float* p = out.pixel(x, y);
            for (int c = 0; c < 3; ++c) p[c] = static_cast<float>(rgb[c]);
        }
    return out;
}

double max_component(const RadianceMap& map) {
    double m = 0.0;
    for (float v : map.data) m = std::max(m, static_cast<double>(v));
    return m;
}

LdrImage display_tonemap(const RadianceMap& map, double scale, double gamma) {
    if (!(scale > 0.0)) throw std::invalid_argument("display scale must be > 0");
    LdrImage out(map.width, map.height);
    const double inv_gamma = 1.0 / gamma;
    for (std::size_t i = 0; i < map.data.size(); ++i) {
        double v = std::max(0.0, static_cast<double>(map.data[i]) * scale);
        out.data[i] = static_cast<float>(std::clamp(std::pow(v, inv_gamma), 0.0, 1.0));
    }
    return out;
}

EvalReport evaluate_model(const Model& model, const Manifest& manifest,
                          const std::string& dataset_dir, const std::string& split,
                          int render_size) {
    std::vector<const Sample*> samples = manifest.split_samples(split);
    if (samples.empty())
        throw std::invalid_argument("split \"" + split + "\" holds no samples");

    const int order = model.config().sh_order;
    const int n_coeff = (order + 1) * (order + 1);

    std::vector<EvalRow> rows(samples.size());
    parallel_chunks(samples.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Sample& s = *samples[i];
            LdrImage mrv = load_png((fs::path(dataset_dir) / s.mrv_path).string());
            Inference pred = infer(model, mrv);

            SHCoeffs truth_norm(order, SHDomain::radiance);
            SHCoeffs truth_raw(order, SHDomain::radiance);
            for (int ch = 0; ch < 3; ++ch)
                for (int k = 0; k < n_coeff; ++k) {
                    double v = s.sh_target[static_cast<std::size_t>(ch) * n_coeff + k];
                    truth_norm.at(ch, k) = v;
                    truth_raw.at(ch, k) = v * s.norm_scale;
                }

            EvalRow& row = rows[i];
            row.panorama_id = s.panorama_id;
            row.view_index = s.view_index;
            row.mse = mse_coeffs(pred.normalized, truth_norm);

            RadianceMap truth_render =
                render_sphere(convolve_irradiance(truth_raw), render_size);
            RadianceMap pred_render =
                render_sphere(convolve_irradiance(pred.denormalized), render_size);
            double scale = max_component(truth_render);
            if (scale <= 0.0) scale = 1.0;
            LdrImage truth_ldr = display_tonemap(truth_render, 1.0 / scale);
            LdrImage pred_ldr = display_tonemap(pred_render, 1.0 / scale);
            row.nrmse = nrmse_image(pred_ldr, truth_ldr);
            row.ssime = ssime_chroma(pred_ldr, truth_ldr);
        }
    });
    return EvalReport::from_rows(std::move(rows));
}

}  // namespace shlight
