#include "shlight/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "shlight/errors.hpp"
#include "shlight/image_io.hpp"
#include "shlight/parallel.hpp"
#include "shlight/random.hpp"
#include "shlight/sh.hpp"

namespace shlight {

namespace fs = std::filesystem;

std::string Manifest::split_of(const std::string& panorama_id) const {
    auto in = [&](const std::vector<std::string>& ids) {
        return std::find(ids.begin(), ids.end(), panorama_id) != ids.end();
    };
    if (in(train_ids)) return "train";
    if (in(val_ids)) return "val";
    if (in(test_ids)) return "test";
    return "";
}

std::vector<const Sample*> Manifest::split_samples(const std::string& split) const {
    std::vector<const Sample*> out;
    for (const Sample& s : samples)
        if (s.split == split) out.push_back(&s);
    return out;
}

void Manifest::validate() const {
    std::set<std::string> seen;
    for (const auto* ids : {&train_ids, &val_ids, &test_ids})
        for (const std::string& id : *ids)
            if (!seen.insert(id).second)
                throw std::invalid_argument("panorama \"" + id + "\" appears in two splits");
    for (const Sample& s : samples) {
        if (seen.find(s.panorama_id) == seen.end())
            throw std::invalid_argument("sample panorama \"" + s.panorama_id +
                                        "\" belongs to no split");
        if (s.view_index < 0 || s.view_index >= views_per_panorama)
            throw std::invalid_argument("view index out of range for \"" + s.panorama_id + "\"");
    }
}

std::vector<GeneratedView> generate_views(const RadianceMap& map, const std::string& panorama_id,
                                          int n_views, std::uint64_t seed,
                                          const ViewConfig& config) {
    if (n_views < 1) throw std::invalid_argument("n_views must be >= 1");
    if (!(config.norm_scale > 0.0)) throw std::invalid_argument("norm_scale must be > 0");

    Rng rng(seed);
    std::vector<GeneratedView> out;
    out.reserve(n_views);
    for (int k = 0; k < n_views; ++k) {
        double yaw = rng.uniform(-180.0, 180.0);
        double pitch = rng.uniform(-15.0, 15.0);

        CameraSpec cam;
        cam.yaw_deg = 0.0;  // the rotation already centered the view
        cam.pitch_deg = 0.0;
        cam.horizontal_fov_deg = config.fov_deg;
        cam.out_width = config.view_width;
        cam.out_height = config.view_height;

        CameraSpec beta_cam = cam;
        beta_cam.pitch_deg = pitch;
        double beta = beta_from_camera(beta_cam);

        RadianceMap rotated = rotate_panorama(map, yaw, pitch);
        RadianceMap warped = warp_panorama(rotated, beta, config.warp_t);
        RadianceMap hdr_view = project_perspective(warped, cam);
        double exposure =
            auto_exposure(hdr_view, config.exposure_percentile, config.exposure_target,
                          config.gamma);

        GeneratedView gv;
        gv.mrv = tonemap_gamma(hdr_view, exposure, config.gamma);

        SHCoeffs target = project_panorama(warped, config.sh_order);
        Sample& s = gv.sample;
        s.panorama_id = panorama_id;
        s.view_index = k;
        s.yaw_deg = yaw;
        s.pitch_deg = pitch;
        s.beta_deg = beta;
        s.t = config.warp_t;
        s.exposure_scale = exposure;
        s.norm_scale = config.norm_scale;
        s.sh_target = target.values();
        for (double& v : s.sh_target) v /= config.norm_scale;
        out.push_back(std::move(gv));
    }
    return out;
}

void split_dataset(Manifest& manifest, std::array<double, 3> ratios, std::uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");

    std::vector<std::string> ids;
    for (const Sample& s : manifest.samples)
        if (std::find(ids.begin(), ids.end(), s.panorama_id) == ids.end())
            ids.push_back(s.panorama_id);
    if (ids.size() < 3) throw std::invalid_argument("need at least 3 panoramas to split");

    std::sort(ids.begin(), ids.end());  // shuffle from a canonical order
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(ids);

    // nearest counts to the ratios with every split non-empty
    std::size_t p = ids.size();
    auto clamp_count = [](long long v, std::size_t lo, std::size_t hi) {
        return std::min(hi, std::max(lo, static_cast<std::size_t>(std::max(0ll, v))));
    };
    std::size_t n_train = clamp_count(std::llround(ratios[0] * p), 1, p - 2);
    std::size_t n_val = clamp_count(std::llround(ratios[1] * p), 1, p - 1 - n_train);

    manifest.train_ids.assign(ids.begin(), ids.begin() + n_train);
    manifest.val_ids.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    manifest.test_ids.assign(ids.begin() + n_train + n_val, ids.end());
    std::sort(manifest.train_ids.begin(), manifest.train_ids.end());
    std::sort(manifest.val_ids.begin(), manifest.val_ids.end());
    std::sort(manifest.test_ids.begin(), manifest.test_ids.end());

    for (Sample& s : manifest.samples) s.split = manifest.split_of(s.panorama_id);
}

double compute_norm_scale(const std::vector<const Sample*>& train_samples) {
    if (train_samples.empty()) throw std::invalid_argument("need at least one target");
    double max_abs = 0.0;
    for (const Sample* s : train_samples)
        for (double v : s->sh_target) max_abs = std::max(max_abs, std::abs(v));
    if (max_abs == 0.0) return 1.0;
    return max_abs * 1.05;
}

// ------------------------------------------------------------- manifest IO --

namespace {

nlohmann::json config_to_json(const ViewConfig& c) {
    return {{"fov_deg", c.fov_deg},
            {"view_width", c.view_width},
            {"view_height", c.view_height},
            {"warp_t", c.warp_t},
            {"gamma", c.gamma},
            {"exposure_percentile", c.exposure_percentile},
            {"exposure_target", c.exposure_target},
            {"sh_order", c.sh_order}};
}

ViewConfig config_from_json(const nlohmann::json& j) {
    ViewConfig c;
    c.fov_deg = j.at("fov_deg").get<double>();
    c.view_width = j.at("view_width").get<int>();
    c.view_height = j.at("view_height").get<int>();
    c.warp_t = j.at("warp_t").get<double>();
    c.gamma = j.at("gamma").get<double>();
    c.exposure_percentile = j.at("exposure_percentile").get<double>();
    c.exposure_target = j.at("exposure_target").get<double>();
    c.sh_order = j.at("sh_order").get<int>();
    return c;
}

}  // namespace

void save_manifest(const std::string& path, const Manifest& manifest) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");

    nlohmann::json header = {{"type", "header"},
                             {"version", manifest.version},
                             {"norm_scale", manifest.norm_scale},
                             {"seed", manifest.seed},
                             {"views_per_panorama", manifest.views_per_panorama},
                             {"camera", config_to_json(manifest.config)},
                             {"splits",
                              {{"train", manifest.train_ids},
                               {"val", manifest.val_ids},
                               {"test", manifest.test_ids}}}};
    f << header.dump() << "\n";

    for (const Sample& s : manifest.samples) {
        nlohmann::json j = {{"type", "sample"},
                            {"panorama_id", s.panorama_id},
                            {"view_index", s.view_index},
                            {"mrv_path", s.mrv_path},
                            {"split", s.split},
                            {"yaw", s.yaw_deg},
                            {"pitch", s.pitch_deg},
                            {"beta", s.beta_deg},
                            {"t", s.t},
                            {"exposure_scale", s.exposure_scale},
                            {"norm_scale", s.norm_scale},
                            {"sh_target", s.sh_target}};
        f << j.dump() << "\n";
    }
}

Manifest load_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);

    Manifest m;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw parse_error(path + " line " + std::to_string(line_no) + ": " + e.what());
        }
        std::string type = j.value("type", "");
        if (type == "header") {
            if (have_header) throw parse_error(path + ": duplicate manifest header");
            have_header = true;
            m.version = j.at("version").get<int>();
            m.norm_scale = j.at("norm_scale").get<double>();
            m.seed = j.at("seed").get<std::uint64_t>();
            m.views_per_panorama = j.at("views_per_panorama").get<int>();
            m.config = config_from_json(j.at("camera"));
            m.config.norm_scale = m.norm_scale;
            m.train_ids = j.at("splits").at("train").get<std::vector<std::string>>();
            m.val_ids = j.at("splits").at("val").get<std::vector<std::string>>();
            m.test_ids = j.at("splits").at("test").get<std::vector<std::string>>();
        } else if (type == "sample") {
            if (!have_header) throw parse_error(path + ": sample record before header");
            Sample s;
            s.panorama_id = j.at("panorama_id").get<std::string>();
            s.view_index = j.at("view_index").get<int>();
            s.mrv_path = j.at("mrv_path").get<std::string>();
            s.split = j.at("split").get<std::string>();
            s.yaw_deg = j.at("yaw").get<double>();
            s.pitch_deg = j.at("pitch").get<double>();
            s.beta_deg = j.at("beta").get<double>();
            s.t = j.at("t").get<double>();
            s.exposure_scale = j.at("exposure_scale").get<double>();
            s.norm_scale = j.at("norm_scale").get<double>();
            s.sh_target = j.at("sh_target").get<std::vector<double>>();
            m.samples.push_back(std::move(s));
        } else {
            throw parse_error(path + " line " + std::to_string(line_no) +
                              ": unknown record type \"" + type + "\"");
        }
    }
    if (!have_header) throw parse_error(path + ": missing manifest header");
    m.validate();
    return m;
}

// ----------------------------------------------------------- full pipeline --

Manifest gen_dataset(const GenDatasetOptions& options) {
    if (options.out_dir.empty()) throw std::invalid_argument("gen_dataset needs an output directory");
    if (options.input_paths.empty() && options.synthetic_count < 3)
        throw std::invalid_argument("need input panoramas or --synthetic >= 3");

    struct PanoEntry {
        std::string id;
        std::string path;  // empty for synthetic
    };
    std::vector<PanoEntry> panos;
    if (!options.input_paths.empty()) {
        for (const std::string& p : options.input_paths)
            panos.push_back({fs::path(p).stem().string(), p});
        std::sort(panos.begin(), panos.end(),
                  [](const PanoEntry& a, const PanoEntry& b) { return a.id < b.id; });
    } else {
        for (int i = 0; i < options.synthetic_count; ++i) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "synth_%04d", i);
            panos.push_back({buf, ""});
        }
    }

    fs::create_directories(fs::path(options.out_dir) / "mrv");

    // Raw (unnormalized) generation, parallel over panoramas; output order is
    // fixed by the panorama list regardless of scheduling.
    std::vector<std::vector<GeneratedView>> views(panos.size());
    parallel_chunks(panos.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            RadianceMap map;
            if (panos[i].path.empty()) {
                Rng spec_rng(derive_seed(options.seed, panos[i].id + "/spec"));
                SynthLightSpec spec = options.synth_flavor == "split-color"
                                          ? split_color_spec(spec_rng, spec_rng.uniform() < 0.5)
                                          : random_light_spec(spec_rng);
                map = synth_panorama(spec, options.synth_width, options.synth_height,
                                     derive_seed(options.seed, panos[i].id + "/texture"));
            } else {
                map = load_radiance_map(panos[i].path);
            }
            ViewConfig raw = options.view;
            raw.norm_scale = 1.0;
            views[i] = generate_views(map, panos[i].id, options.views_per_panorama,
                                      derive_seed(options.seed, panos[i].id), raw);
        }
    });

    Manifest manifest;
    manifest.seed = options.seed;
    manifest.views_per_panorama = options.views_per_panorama;
    manifest.config = options.view;
    for (auto& per_pano : views)
        for (auto& gv : per_pano) manifest.samples.push_back(gv.sample);

    split_dataset(manifest, options.split_ratios, options.seed);

    manifest.norm_scale = compute_norm_scale(manifest.split_samples("train"));
    manifest.config.norm_scale = manifest.norm_scale;
    for (Sample& s : manifest.samples) {
        s.norm_scale = manifest.norm_scale;
        for (double& v : s.sh_target) v /= manifest.norm_scale;
    }

    // write MRVs and stamp paths (relative to the manifest location)
    std::size_t flat = 0;
    for (std::size_t i = 0; i < views.size(); ++i)
        for (std::size_t k = 0; k < views[i].size(); ++k, ++flat) {
            char name[96];
            std::snprintf(name, sizeof(name), "mrv/%s_v%02d.png", panos[i].id.c_str(),
                          static_cast<int>(k));
            manifest.samples[flat].mrv_path = name;
            save_png((fs::path(options.out_dir) / name).string(), views[i][k].mrv);
        }

    manifest.validate();
    save_manifest((fs::path(options.out_dir) / "manifest.jsonl").string(), manifest);
    return manifest;
}

}  // namespace shlight
