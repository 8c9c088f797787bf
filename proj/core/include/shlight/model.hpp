#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shlight/dataset.hpp"
#include "shlight/graph.hpp"
#include "shlight/image.hpp"
#include "shlight/sh.hpp"
#include "shlight/tensor.hpp"

namespace shlight {

enum class LossMode { render, weighted, banded };

LossMode loss_mode_from_string(const std::string& s);
std::string to_string(LossMode m);

// Fire stage: 1x1 squeeze conv feeding parallel 1x1 / 3x3 expand convs whose
// outputs concatenate channel-wise.
struct FireSpec {
    int squeeze = 16;
    int expand1x1 = 64;
    int expand3x3 = 64;
    bool pool_after = false;

    int out_channels() const { return expand1x1 + expand3x3; }
};

struct ModelConfig {
    int input_height = 192;
    int input_width = 256;
    int stem_channels = 32;   // 3x3 stride-2 conv, then a 2x2 maxpool
    std::vector<FireSpec> fires;
    std::vector<int> sh_hidden{512, 256};  // widths of the hidden FC layers
    int sh_order = 2;
    double dropout_p = 0.5;

    bool luv_enabled = true;
    int luv_base_channels = 8;
    int luv_height = 48;
    int luv_width = 64;

    LossMode loss_mode = LossMode::render;
    double alpha = 0.7;                       // head weight in the combined loss
    std::array<double, 3> band_weights{1, 1, 1};
    int render_grid_width = 32;
    int render_grid_height = 16;

    int sh_outputs() const { return 3 * (sh_order + 1) * (sh_order + 1); }
    int latent_dim() const { return fires.empty() ? stem_channels : fires.back().out_channels(); }
    void validate() const;

    // Reduced configuration trainable on a workstation.
    static ModelConfig desk_default();
    // Mirrors the cited extractor: eight fire modules and the 2048/1024/27
    // coefficient decoder.
    static ModelConfig full_profile();

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    static ModelConfig load(const std::string& path);
};

struct TrainRun {
    int batch_size = 64;
    double lr = 1e-4;
    int max_epochs = 100;
    int patience = 10;       // early stop after this many epochs without val improvement
    std::uint64_t seed = 1;
    int shards = 1;          // batch shards run in parallel; gradient reduction is shard-ordered
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_sh_mse = 0.0;
};

// --------------------------------------------------------------- the model --

template <class S>
struct ModelParamsT {
    std::vector<std::string> names;
    std::vector<TensorT<S>> tensors;
};

// Fan-in-scaled uniform init; each parameter draws from its own named stream
// so the layout can evolve without reshuffling every other tensor.
template <class S>
ModelParamsT<S> init_params(const ModelConfig& config, std::uint64_t seed);

template <class S>
struct ModelHeadsT {
    typename TapeT<S>::Id sh = -1;
    typename TapeT<S>::Id luv = -1;  // -1 when the LUV head is disabled
};

// Builds the forward graph from parameter leaf ids (same order as
// init_params). `input` must be [N, 3, input_height, input_width].
template <class S>
ModelHeadsT<S> build_forward(TapeT<S>& tape, const ModelConfig& config,
                             const std::vector<typename TapeT<S>::Id>& params,
                             typename TapeT<S>::Id input, bool train_mode);

// ------------------------------------------------------------------ losses --

// alpha * mse(sh) + (1 - alpha) * mse(luv)
template <class S>
typename TapeT<S>::Id loss_weighted(TapeT<S>& tape, typename TapeT<S>::Id pred_sh,
                                    typename TapeT<S>::Id target_sh,
                                    typename TapeT<S>::Id pred_luv,
                                    typename TapeT<S>::Id target_luv, double alpha);

// sum over channels of w0 E(band0) + w1 E(band1) + w2 E(band2), E = per-band MSE
template <class S>
typename TapeT<S>::Id loss_banded(TapeT<S>& tape, typename TapeT<S>::Id pred_sh,
                                  typename TapeT<S>::Id target_sh,
                                  std::array<double, 3> weights, int order);

// Reconstructs both coefficient sets to irradiance maps on a fixed direction
// grid (all linear in the coefficients) and takes the per-pixel MSE.
template <class S>
typename TapeT<S>::Id loss_render(TapeT<S>& tape, typename TapeT<S>::Id pred_sh,
                                  typename TapeT<S>::Id target_sh, int grid_width,
                                  int grid_height, int order);

// Rows are the grid directions, columns the (order+1)^2 basis functions,
// entries scaled by the per-band cosine-lobe factor. Exposed so tests can
// check the direction set spans the basis.
std::vector<double> render_basis_matrix(int grid_width, int grid_height, int order);

// ------------------------------------------------------------- checkpoints --

struct Checkpoint {
    ModelConfig config;
    double norm_scale = 1.0;
    ModelParamsT<float> params;
    // optimizer state, present when saved mid-training
    bool has_optimizer = false;
    long long adam_step_count = 0;
    std::vector<Tensor> adam_m, adam_v;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// -------------------------------------------------------------- operations --

class Model {
public:
    Model(ModelConfig config, std::uint64_t seed);
    explicit Model(Checkpoint ckpt);

    const ModelConfig& config() const { return config_; }
    const ModelParamsT<float>& params() const { return params_; }
    ModelParamsT<float>& params() { return params_; }
    double norm_scale() const { return norm_scale_; }
    void set_norm_scale(double s) { norm_scale_ = s; }

    std::size_t parameter_count() const;

    // Eval-mode forward of a preprocessed batch [N,3,H,W]; returns the SH
    // head [N, sh_outputs]. Shards the batch across worker threads.
    Tensor infer_batch(const Tensor& batch) const;

    Checkpoint to_checkpoint() const;

private:
    ModelConfig config_;
    ModelParamsT<float> params_;
    double norm_scale_ = 1.0;
};

struct Inference {
    SHCoeffs normalized;     // raw softsign outputs, in (-1, 1)
    SHCoeffs denormalized;   // scaled back to radiance units
};

// Resizes to the training resolution when needed (warns on stderr).
Inference infer(const Model& model, const LdrImage& image);

struct BBox {
    int x = 0, y = 0, width = 0, height = 0;
};

// Crop -> rescale -> infer, one result per box. Boxes must lie inside the
// image and be at least 16x16.
std::vector<Inference> infer_local(const Model& model, const LdrImage& image,
                                   const std::vector<BBox>& boxes);

// ---------------------------------------------------------------- training --

struct TrainResult {
    std::vector<EpochStats> history;
    Checkpoint best;         // parameters at the best validation loss
    double best_val_loss = 0.0;
    int best_epoch = -1;
};

// In-memory training set; the loader reads MRVs from the dataset directory.
struct TrainingData {
    std::vector<Tensor> inputs;       // [3,H,W] each, model input resolution
    std::vector<Tensor> sh_targets;   // [sh_outputs]
    std::vector<Tensor> luv_targets;  // [3, luv_h, luv_w]
    std::vector<int> train_indices;
    std::vector<int> val_indices;
    std::vector<int> test_indices;
};

TrainingData load_training_data(const Manifest& manifest, const std::string& dataset_dir,
                                const ModelConfig& config);

TrainResult train(const Manifest& manifest, const std::string& dataset_dir,
                  const ModelConfig& config, const TrainRun& run,
                  const std::string& history_csv_path = "");

}  // namespace shlight
