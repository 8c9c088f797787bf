#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "shlight/image.hpp"
#include "shlight/panorama.hpp"
#include "shlight/synth.hpp"

namespace shlight {

// Pipeline settings shared by every generated view.
struct ViewConfig {
    double fov_deg = 90.0;
    int view_width = 256;
    int view_height = 192;
    double warp_t = 0.3;
    double gamma = 2.2;
    double exposure_percentile = 0.90;
    double exposure_target = 0.80;
    int sh_order = 2;
    double norm_scale = 1.0;  // divisor applied to SH targets
};

// One [LDR mixed-reality-view, HDR SH target] training tuple.
struct Sample {
    std::string panorama_id;
    int view_index = 0;
    std::string mrv_path;
    std::vector<double> sh_target;  // normalized, channel-major [ch][i]
    double yaw_deg = 0.0;
    double pitch_deg = 0.0;
    double beta_deg = 0.0;
    double t = 0.0;
    double exposure_scale = 1.0;
    double norm_scale = 1.0;
    std::string split;  // "train", "val", "test" or empty before splitting
};

struct Manifest {
    int version = 1;
    double norm_scale = 1.0;
    std::uint64_t seed = 0;
    int views_per_panorama = 8;
    ViewConfig config;
    std::vector<std::string> train_ids, val_ids, test_ids;
    std::vector<Sample> samples;

    // Returns "train"/"val"/"test" or empty when the id is unknown.
    std::string split_of(const std::string& panorama_id) const;
    std::vector<const Sample*> split_samples(const std::string& split) const;
    void validate() const;  // disjointness, membership, target range
};

struct GeneratedView {
    Sample sample;    // norm_scale applied from the ViewConfig
    LdrImage mrv;
};

// Runs the full view pipeline n_views times: draw yaw in [-180, 180] and
// pitch in [-15, 15], rotate, warp toward the lowest visible point, project
// the perspective view, tonemap with percentile-anchored exposure, and
// project the rotated+warped HDR panorama onto the SH basis.
std::vector<GeneratedView> generate_views(const RadianceMap& map, const std::string& panorama_id,
                                          int n_views, std::uint64_t seed,
                                          const ViewConfig& config);

// Assigns panorama ids to train/val/test with a seeded shuffle; all views of
// one panorama land in the same split. Requires at least 3 panoramas and
// ratios summing to 1.
void split_dataset(Manifest& manifest, std::array<double, 3> ratios, std::uint64_t seed);

// max |coefficient| over the given targets, with 5% headroom; 1 when all
// targets are zero.
double compute_norm_scale(const std::vector<const Sample*>& train_samples);

// JSONL manifest: one header record, then one record per sample, ordered by
// (panorama_id, view_index).
void save_manifest(const std::string& path, const Manifest& manifest);
Manifest load_manifest(const std::string& path);

// End-to-end dataset builder used by the CLI `gen-dataset` command.
struct GenDatasetOptions {
    std::vector<std::string> input_paths;  // .hdr / .pfm panoramas
    int synthetic_count = 0;               // used when input_paths is empty
    int synth_width = 256;
    int synth_height = 128;
    std::string synth_flavor = "mixed";   // "mixed" or "split-color"
    int views_per_panorama = 8;
    std::uint64_t seed = 1;
    std::array<double, 3> split_ratios{0.70, 0.15, 0.15};
    ViewConfig view;
    std::string out_dir;
};

Manifest gen_dataset(const GenDatasetOptions& options);

}  // namespace shlight
