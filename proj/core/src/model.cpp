#include "shlight/model.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "shlight/color.hpp"
#include "shlight/errors.hpp"
#include "shlight/image_io.hpp"
#include "shlight/parallel.hpp"

namespace shlight {

namespace fs = std::filesystem;

LossMode loss_mode_from_string(const std::string& s) {
    if (s == "render") return LossMode::render;
    if (s == "weighted") return LossMode::weighted;
    if (s == "banded") return LossMode::banded;
    throw std::invalid_argument("unknown loss mode \"" + s + "\"");
}

std::string to_string(LossMode m) {
    switch (m) {
        case LossMode::render: return "render";
        case LossMode::weighted: return "weighted";
        case LossMode::banded: return "banded";
    }
    return "render";
}

// ------------------------------------------------------------ ModelConfig --

void ModelConfig::validate() const {
    if (input_height < 8 || input_width < 8)
        throw std::invalid_argument("model input must be at least 8x8");
    if (sh_order < 0 || sh_order > kMaxShOrder)
        throw std::invalid_argument("sh_order out of range");
    if (fires.empty()) throw std::invalid_argument("at least one fire module is required");
    for (const FireSpec& f : fires)
        if (f.squeeze < 1 || f.expand1x1 < 1 || f.expand3x3 < 1)
            throw std::invalid_argument("fire module widths must be positive");
    if (sh_hidden.empty()) throw std::invalid_argument("sh decoder needs hidden layers");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
        throw std::invalid_argument("dropout_p must be in [0, 1)");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in [0, 1]");
    if (luv_enabled && (luv_height < 4 || luv_width < 4 || luv_base_channels < 1))
        throw std::invalid_argument("bad LUV decoder configuration");
    if (render_grid_width * render_grid_height < (sh_order + 1) * (sh_order + 1))
        throw std::invalid_argument("render grid cannot span the SH basis");
}

ModelConfig ModelConfig::desk_default() {
    ModelConfig c;
    c.fires = {{16, 64, 64, true}, {16, 64, 64, true}, {16, 64, 64, true}, {16, 64, 64, false}};
    return c;
}

ModelConfig ModelConfig::full_profile() {
    ModelConfig c;
    c.stem_channels = 64;
    c.fires = {{16, 64, 64, false},   {16, 64, 64, true},  {32, 128, 128, false},
               {32, 128, 128, true},  {48, 192, 192, false}, {48, 192, 192, false},
               {64, 256, 256, false}, {64, 256, 256, false}};
    c.sh_hidden = {2048, 1024};
    c.luv_base_channels = 16;
    return c;
}

std::string ModelConfig::to_json() const {
    nlohmann::json fires_json = nlohmann::json::array();
    for (const FireSpec& f : fires)
        fires_json.push_back({{"squeeze", f.squeeze},
                              {"expand1x1", f.expand1x1},
                              {"expand3x3", f.expand3x3},
                              {"pool_after", f.pool_after}});
    nlohmann::json j = {{"input_height", input_height},
                        {"input_width", input_width},
                        {"stem_channels", stem_channels},
                        {"fires", fires_json},
                        {"sh_hidden", sh_hidden},
                        {"sh_order", sh_order},
                        {"dropout_p", dropout_p},
                        {"luv_enabled", luv_enabled},
                        {"luv_base_channels", luv_base_channels},
                        {"luv_height", luv_height},
                        {"luv_width", luv_width},
                        {"loss_mode", shlight::to_string(loss_mode)},
                        {"alpha", alpha},
                        {"band_weights", band_weights},
                        {"render_grid_width", render_grid_width},
                        {"render_grid_height", render_grid_height}};
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(std::string("model config is not valid JSON: ") + e.what(), e.byte);
    }
    ModelConfig c = desk_default();
    if (j.contains("profile")) {
        std::string p = j["profile"].get<std::string>();
        if (p == "full") c = full_profile();
        else if (p != "desk") throw std::invalid_argument("unknown profile \"" + p + "\"");
    }
    if (j.contains("input_height")) c.input_height = j["input_height"].get<int>();
    if (j.contains("input_width")) c.input_width = j["input_width"].get<int>();
    if (j.contains("stem_channels")) c.stem_channels = j["stem_channels"].get<int>();
    if (j.contains("fires")) {
        c.fires.clear();
        for (const auto& f : j["fires"])
            c.fires.push_back({f.at("squeeze").get<int>(), f.at("expand1x1").get<int>(),
                               f.at("expand3x3").get<int>(), f.value("pool_after", false)});
    }
    if (j.contains("sh_hidden")) c.sh_hidden = j["sh_hidden"].get<std::vector<int>>();
    if (j.contains("sh_order")) c.sh_order = j["sh_order"].get<int>();
    if (j.contains("dropout_p")) c.dropout_p = j["dropout_p"].get<double>();
    if (j.contains("luv_enabled")) c.luv_enabled = j["luv_enabled"].get<bool>();
    if (j.contains("luv_base_channels")) c.luv_base_channels = j["luv_base_channels"].get<int>();
    if (j.contains("luv_height")) c.luv_height = j["luv_height"].get<int>();
    if (j.contains("luv_width")) c.luv_width = j["luv_width"].get<int>();
    if (j.contains("loss_mode")) c.loss_mode = loss_mode_from_string(j["loss_mode"]);
    if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
    if (j.contains("band_weights")) c.band_weights = j["band_weights"].get<std::array<double, 3>>();
    if (j.contains("render_grid_width")) c.render_grid_width = j["render_grid_width"].get<int>();
    if (j.contains("render_grid_height"))
        c.render_grid_height = j["render_grid_height"].get<int>();
    c.validate();
    return c;
}

ModelConfig ModelConfig::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return from_json(ss.str());
}

// ------------------------------------------------------------- parameters --

namespace {

template <class S>
TensorT<S> uniform_init(std::vector<int> shape, int fan_in, std::uint64_t seed) {
    TensorT<S> t(std::move(shape));
    t.requires_grad = true;
    Rng rng(seed);
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (S& v : t.data) v = static_cast<S>(rng.uniform(-limit, limit));
    return t;
}

// Small positive bias keeps relu pre-activations off the exact-zero kink
// (an all-clamped window would otherwise sit right on it).
constexpr double kBiasInit = 0.01;

template <class S>
void add_conv(ModelParamsT<S>& p, const std::string& name, int out_c, int in_c, int k,
              std::uint64_t seed) {
    p.names.push_back(name + ".w");
    p.tensors.push_back(uniform_init<S>({out_c, in_c, k, k}, in_c * k * k,
                                        derive_seed(seed, name + ".w")));
    p.names.push_back(name + ".b");
    TensorT<S> b = TensorT<S>::full({out_c}, static_cast<S>(kBiasInit));
    b.requires_grad = true;
    p.tensors.push_back(std::move(b));
}

template <class S>
void add_fc(ModelParamsT<S>& p, const std::string& name, int in_d, int out_d,
            std::uint64_t seed) {
    p.names.push_back(name + ".w");
    p.tensors.push_back(uniform_init<S>({in_d, out_d}, in_d, derive_seed(seed, name + ".w")));
    p.names.push_back(name + ".b");
    TensorT<S> b = TensorT<S>::full({out_d}, static_cast<S>(kBiasInit));
    b.requires_grad = true;
    p.tensors.push_back(std::move(b));
}

}  // namespace

template <class S>
ModelParamsT<S> init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParamsT<S> p;
    add_conv(p, "stem", config.stem_channels, 3, 3, seed);
    int channels = config.stem_channels;
    for (std::size_t i = 0; i < config.fires.size(); ++i) {
        std::string base = "fire" + std::to_string(i);
        const FireSpec& f = config.fires[i];
        add_conv(p, base + ".squeeze", f.squeeze, channels, 1, seed);
        add_conv(p, base + ".expand1", f.expand1x1, f.squeeze, 1, seed);
        add_conv(p, base + ".expand3", f.expand3x3, f.squeeze, 3, seed);
        channels = f.out_channels();
    }
    int d = channels;  // latent after global average pooling
    for (std::size_t i = 0; i < config.sh_hidden.size(); ++i) {
        add_fc(p, "sh.fc" + std::to_string(i), d, config.sh_hidden[i], seed);
        d = config.sh_hidden[i];
    }
    add_fc(p, "sh.out", d, config.sh_outputs(), seed);

    if (config.luv_enabled) {
        int h4 = std::max(1, config.luv_height / 4);
        int w4 = std::max(1, config.luv_width / 4);
        add_fc(p, "luv.fc", channels, config.luv_base_channels * h4 * w4, seed);
        add_conv(p, "luv.conv0", config.luv_base_channels, config.luv_base_channels, 3, seed);
        add_conv(p, "luv.conv1", 3, config.luv_base_channels, 3, seed);
    }
    return p;
}

template <class S>
ModelHeadsT<S> build_forward(TapeT<S>& tape, const ModelConfig& config,
                             const std::vector<typename TapeT<S>::Id>& params,
                             typename TapeT<S>::Id input, bool train_mode) {
    using Id = typename TapeT<S>::Id;
    std::size_t pi = 0;
    auto next = [&]() -> Id {
        if (pi >= params.size()) throw std::invalid_argument("parameter list too short");
        return params[pi++];
    };

    Id w = next(), b = next();
    Id x = tape.relu(tape.conv2d(input, w, b, 2, 1));
    x = tape.maxpool2d(x, 2, 2);

    for (const FireSpec& f : config.fires) {
        Id sw = next(), sb = next();
        Id squeezed = tape.relu(tape.conv2d(x, sw, sb, 1, 0));
        Id e1w = next(), e1b = next();
        Id e1 = tape.relu(tape.conv2d(squeezed, e1w, e1b, 1, 0));
        Id e3w = next(), e3b = next();
        Id e3 = tape.relu(tape.conv2d(squeezed, e3w, e3b, 1, 1));
        x = tape.concat_channels(e1, e3);
        if (f.pool_after) x = tape.maxpool2d(x, 2, 2);
    }

    Id latent = tape.global_avg_pool(x);

    Id h = latent;
    for (std::size_t i = 0; i < config.sh_hidden.size(); ++i) {
        Id fw = next(), fb = next();
        h = tape.relu(tape.fully_connected(h, fw, fb));
        h = tape.dropout(h, static_cast<S>(config.dropout_p), train_mode);
    }
    Id ow = next(), ob = next();
    ModelHeadsT<S> heads;
    heads.sh = tape.softsign(tape.fully_connected(h, ow, ob));

    if (config.luv_enabled) {
        int h4 = std::max(1, config.luv_height / 4);
        int w4 = std::max(1, config.luv_width / 4);
        int n = tape.value(input).dim(0);
        Id lw = next(), lb = next();
        Id seed_map = tape.relu(tape.fully_connected(latent, lw, lb));
        Id grid = tape.reshape(seed_map, {n, config.luv_base_channels, h4, w4});
        Id up1 = tape.bilinear_resize(grid, h4 * 2, w4 * 2);
        Id c0w = next(), c0b = next();
        Id feat = tape.relu(tape.conv2d(up1, c0w, c0b, 1, 1));
        Id up2 = tape.bilinear_resize(feat, config.luv_height, config.luv_width);
        Id c1w = next(), c1b = next();
        heads.luv = tape.conv2d(up2, c1w, c1b, 1, 1);
    }
    return heads;
}

// ----------------------------------------------------------------- losses --

template <class S>
typename TapeT<S>::Id loss_weighted(TapeT<S>& tape, typename TapeT<S>::Id pred_sh,
                                    typename TapeT<S>::Id target_sh,
                                    typename TapeT<S>::Id pred_luv,
                                    typename TapeT<S>::Id target_luv, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in [0, 1]");
    auto sh = tape.scale(tape.mse(pred_sh, target_sh), static_cast<S>(alpha));
    auto luv = tape.scale(tape.mse(pred_luv, target_luv), static_cast<S>(1.0 - alpha));
    return tape.add(sh, luv);
}

template <class S>
typename TapeT<S>::Id loss_banded(TapeT<S>& tape, typename TapeT<S>::Id pred_sh,
                                  typename TapeT<S>::Id target_sh,
                                  std::array<double, 3> weights, int order) {
    for (double w : weights)
        if (!(w >= 0.0)) throw std::invalid_argument("band weights must be >= 0");
    if (order > 2) throw std::invalid_argument("banded loss is defined for orders <= 2");
    const auto& shape = tape.value(pred_sh).shape;
    if (shape.size() != 2) throw std::invalid_argument("loss_banded expects [N, coeffs]");
    const int n = shape[0];
    const int count = (order + 1) * (order + 1);
    if (shape[1] != 3 * count) throw std::invalid_argument("coefficient dimension mismatch");

    typename TapeT<S>::Id total = -1;
    for (int ch = 0; ch < 3; ++ch)
        for (int l = 0; l <= order; ++l) {
            // mask picks one channel's band; over the masked tensor
            // mse * (total / band_size) is the per-band mean squared error
            TensorT<S> mask({n, 3 * count});
            for (int row = 0; row < n; ++row)
                for (int m = -l; m <= l; ++m)
                    mask.data[static_cast<std::size_t>(row) * 3 * count + ch * count +
                              l * (l + 1) + m] = S(1);
            auto mid = tape.input(std::move(mask));
            auto band_mse = tape.mse(tape.mul(pred_sh, mid), tape.mul(target_sh, mid));
            double factor = weights[l] * (3.0 * count) / (2.0 * l + 1.0);
            auto term = tape.scale(band_mse, static_cast<S>(factor));
            total = total < 0 ? term : tape.add(total, term);
        }
    return total;
}

std::vector<double> render_basis_matrix(int grid_width, int grid_height, int order) {
    const int n = (order + 1) * (order + 1);
    EquirectGrid grid{grid_width, grid_height};
    std::vector<double> basis(static_cast<std::size_t>(grid_width) * grid_height * n);
    std::vector<double> y(n);
    std::size_t row = 0;
    for (int v = 0; v < grid_height; ++v)
        for (int u = 0; u < grid_width; ++u, ++row) {
            sh_basis_eval_into(grid.direction(u, v), order, y.data());
            for (int l = 0, i = 0; l <= order; ++l) {
                double f = cosine_lobe_band_factor(l);
                for (int m = -l; m <= l; ++m, ++i) basis[row * n + i] = f * y[i];
            }
        }
    return basis;
}

template <class S>
typename TapeT<S>::Id loss_render(TapeT<S>& tape, typename TapeT<S>::Id pred_sh,
                                  typename TapeT<S>::Id target_sh, int grid_width,
                                  int grid_height, int order) {
    const auto& shape = tape.value(pred_sh).shape;
    if (shape.size() != 2) throw std::invalid_argument("loss_render expects [N, coeffs]");
    const int n_coeff = (order + 1) * (order + 1);
    if (shape[1] != 3 * n_coeff) throw std::invalid_argument("coefficient dimension mismatch");
    const int batch = shape[0];
    const int pixels = grid_width * grid_height;

    // fixed linear map: irradiance image = basis * coefficients
    std::vector<double> basis = render_basis_matrix(grid_width, grid_height, order);
    TensorT<S> w({n_coeff, pixels});
    for (int p = 0; p < pixels; ++p)
        for (int i = 0; i < n_coeff; ++i)
            w.data[static_cast<std::size_t>(i) * pixels + p] =
                static_cast<S>(basis[static_cast<std::size_t>(p) * n_coeff + i]);
    auto wid = tape.input(std::move(w));
    auto bid = tape.input(TensorT<S>({pixels}));  // zero bias

    auto render = [&](typename TapeT<S>::Id coeffs) {
        auto flat = tape.reshape(coeffs, {batch * 3, n_coeff});
        return tape.fully_connected(flat, wid, bid);
    };
    return tape.mse(render(pred_sh), render(target_sh));
}

// ------------------------------------------------------------- checkpoint --

namespace {

constexpr char kMagic[4] = {'S', 'H', 'L', '1'};

void put_u32(std::ostream& f, std::uint32_t v) { f.write(reinterpret_cast<char*>(&v), 4); }
void put_u64(std::ostream& f, std::uint64_t v) { f.write(reinterpret_cast<char*>(&v), 8); }

std::uint32_t get_u32(std::istream& f) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (!f) throw parse_error("truncated checkpoint");
    return v;
}

std::uint64_t get_u64(std::istream& f) {
    std::uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    if (!f) throw parse_error("truncated checkpoint");
    return v;
}

std::uint32_t crc_bytes(const void* data, std::size_t n) {
    return static_cast<std::uint32_t>(
        crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

void put_tensor(std::ostream& f, const std::string& name, const Tensor& t) {
    put_u32(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(f, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(f, static_cast<std::uint32_t>(d));
    std::uint64_t bytes = t.data.size() * sizeof(float);
    put_u64(f, bytes);
    f.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(bytes));
    put_u32(f, crc_bytes(t.data.data(), bytes));
}

std::pair<std::string, Tensor> get_tensor(std::istream& f) {
    std::uint32_t name_len = get_u32(f);
    if (name_len > 4096) throw parse_error("checkpoint tensor name too long");
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    std::uint32_t ndim = get_u32(f);
    if (ndim > 8) throw parse_error("checkpoint tensor rank too high");
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(get_u32(f));
    Tensor t(shape);
    std::uint64_t bytes = get_u64(f);
    if (bytes != t.data.size() * sizeof(float))
        throw parse_error("checkpoint tensor size mismatch for \"" + name + "\"");
    f.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(bytes));
    if (!f) throw parse_error("truncated checkpoint tensor \"" + name + "\"");
    std::uint32_t crc = get_u32(f);
    if (crc != crc_bytes(t.data.data(), bytes))
        throw parse_error("checkpoint checksum mismatch for \"" + name + "\"");
    return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f.write(kMagic, 4);
    put_u32(f, 1);  // format version

    nlohmann::json meta = {{"config", nlohmann::json::parse(ckpt.config.to_json())},
                           {"norm_scale", ckpt.norm_scale}};
    std::string meta_str = meta.dump();
    put_u32(f, static_cast<std::uint32_t>(meta_str.size()));
    f.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    put_u32(f, crc_bytes(meta_str.data(), meta_str.size()));

    put_u32(f, static_cast<std::uint32_t>(ckpt.params.tensors.size()));
    for (std::size_t i = 0; i < ckpt.params.tensors.size(); ++i)
        put_tensor(f, ckpt.params.names[i], ckpt.params.tensors[i]);

    f.put(ckpt.has_optimizer ? 1 : 0);
    if (ckpt.has_optimizer) {
        put_u64(f, static_cast<std::uint64_t>(ckpt.adam_step_count));
        for (std::size_t i = 0; i < ckpt.adam_m.size(); ++i) {
            put_tensor(f, "m/" + ckpt.params.names[i], ckpt.adam_m[i]);
            put_tensor(f, "v/" + ckpt.params.names[i], ckpt.adam_v[i]);
        }
    }
    if (!f) throw std::runtime_error("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw parse_error(path + ": not a checkpoint (bad magic)", 0);
    std::uint32_t version = get_u32(f);
    if (version != 1)
        throw parse_error(path + ": unsupported checkpoint version " + std::to_string(version));

    std::uint32_t meta_len = get_u32(f);
    if (meta_len > (1u << 20)) throw parse_error(path + ": implausible metadata size");
    std::string meta_str(meta_len, '\0');
    f.read(meta_str.data(), meta_len);
    std::uint32_t meta_crc = get_u32(f);
    if (!f || meta_crc != crc_bytes(meta_str.data(), meta_str.size()))
        throw parse_error(path + ": metadata checksum mismatch");

    Checkpoint ckpt;
    nlohmann::json meta = nlohmann::json::parse(meta_str);
    ckpt.config = ModelConfig::from_json(meta.at("config").dump());
    ckpt.norm_scale = meta.at("norm_scale").get<double>();

    std::uint32_t n_tensors = get_u32(f);
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        auto [name, tensor] = get_tensor(f);
        tensor.requires_grad = true;
        ckpt.params.names.push_back(std::move(name));
        ckpt.params.tensors.push_back(std::move(tensor));
    }

    int has_opt = f.get();
    if (has_opt == 1) {
        ckpt.has_optimizer = true;
        ckpt.adam_step_count = static_cast<long long>(get_u64(f));
        for (std::uint32_t i = 0; i < n_tensors; ++i) {
            ckpt.adam_m.push_back(get_tensor(f).second);
            ckpt.adam_v.push_back(get_tensor(f).second);
        }
    }
    return ckpt;
}

// ------------------------------------------------------------------ Model --

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    params_ = init_params<float>(config_, seed);
}

Model::Model(Checkpoint ckpt)
    : config_(std::move(ckpt.config)),
      params_(std::move(ckpt.params)),
      norm_scale_(ckpt.norm_scale) {
    ModelParamsT<float> expected = init_params<float>(config_, 0);
    if (expected.names != params_.names)
        throw parse_error("checkpoint parameters do not match the stored configuration");
    for (std::size_t i = 0; i < expected.tensors.size(); ++i)
        if (expected.tensors[i].shape != params_.tensors[i].shape)
            throw parse_error("checkpoint tensor \"" + params_.names[i] + "\" has wrong shape");
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor& t : params_.tensors) n += t.size();
    return n;
}

Checkpoint Model::to_checkpoint() const {
    Checkpoint c;
    c.config = config_;
    c.norm_scale = norm_scale_;
    c.params = params_;
    return c;
}

Tensor Model::infer_batch(const Tensor& batch) const {
    if (batch.ndim() != 4 || batch.dim(1) != 3 || batch.dim(2) != config_.input_height ||
        batch.dim(3) != config_.input_width)
        throw std::invalid_argument("infer_batch expects [N,3," +
                                    std::to_string(config_.input_height) + "," +
                                    std::to_string(config_.input_width) + "]");
    const int n = batch.dim(0);
    const int out_dim = config_.sh_outputs();
    Tensor out({n, out_dim});

    // fixed-size shards; each shard forwards independently so results do not
    // depend on scheduling
    const int workers = std::min(n, worker_threads());
    const int shard = (n + workers - 1) / workers;
    const std::size_t image_elems = batch.size() / static_cast<std::size_t>(n);
    parallel_chunks(static_cast<std::size_t>((n + shard - 1) / shard),
                    [&](std::size_t begin, std::size_t end) {
                        for (std::size_t si = begin; si < end; ++si) {
                            int first = static_cast<int>(si) * shard;
                            int count = std::min(shard, n - first);
                            Tensor sub({count, 3, config_.input_height, config_.input_width});
                            std::copy_n(batch.data.begin() +
                                            static_cast<std::size_t>(first) * image_elems,
                                        static_cast<std::size_t>(count) * image_elems,
                                        sub.data.begin());
                            Tape tape(0);
                            std::vector<Tape::Id> pids;
                            pids.reserve(params_.tensors.size());
                            for (const Tensor& t : params_.tensors) pids.push_back(tape.input(t));
                            auto heads =
                                build_forward<float>(tape, config_, pids, tape.input(sub), false);
                            const Tensor& sh = tape.value(heads.sh);
                            std::copy_n(sh.data.begin(),
                                        static_cast<std::size_t>(count) * out_dim,
                                        out.data.begin() +
                                            static_cast<std::size_t>(first) * out_dim);
                        }
                    });
    return out;
}

// -------------------------------------------------------------- inference --

namespace {

Tensor image_to_tensor(const LdrImage& image) {
    Tensor t({1, 3, image.height, image.width});
    const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
    for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c) t.data[c * plane + p] = image.data[p * 3 + c];
    return t;
}

}  // namespace

Inference infer(const Model& model, const LdrImage& image) {
    if (image.width < 16 || image.height < 16)
        throw std::invalid_argument("inference input must be at least 16x16");
    const ModelConfig& cfg = model.config();
    LdrImage scaled = image;
    if (image.width != cfg.input_width || image.height != cfg.input_height) {
        static std::once_flag warned;
        std::call_once(warned, [&] {
            std::cerr << "shlight: resizing " << image.width << "x" << image.height
                      << " input to the training resolution " << cfg.input_width << "x"
                      << cfg.input_height << "\n";
        });
        scaled = resize_bilinear(image, cfg.input_width, cfg.input_height);
    }
    Tensor out = model.infer_batch(image_to_tensor(scaled));

    Inference result{SHCoeffs(cfg.sh_order, SHDomain::radiance),
                     SHCoeffs(cfg.sh_order, SHDomain::radiance)};
    const int n = result.normalized.count();
    for (int ch = 0; ch < 3; ++ch)
        for (int i = 0; i < n; ++i) {
            double v = out.data[static_cast<std::size_t>(ch) * n + i];
            result.normalized.at(ch, i) = v;
            result.denormalized.at(ch, i) = v * model.norm_scale();
        }
    return result;
}

std::vector<Inference> infer_local(const Model& model, const LdrImage& image,
                                   const std::vector<BBox>& boxes) {
    std::vector<Inference> out;
    out.reserve(boxes.size());
    for (const BBox& b : boxes) {
        if (b.width < 16 || b.height < 16)
            throw std::invalid_argument("bbox must be at least 16x16");
        if (b.x < 0 || b.y < 0 || b.x + b.width > image.width || b.y + b.height > image.height)
            throw std::invalid_argument("bbox exceeds image bounds");
        LdrImage crop(b.width, b.height);
        for (int y = 0; y < b.height; ++y)
            std::copy_n(image.pixel(b.x, b.y + y), static_cast<std::size_t>(b.width) * 3,
                        crop.pixel(0, y));
        out.push_back(infer(model, crop));
    }
    return out;
}

// --------------------------------------------------------------- training --

TrainingData load_training_data(const Manifest& manifest, const std::string& dataset_dir,
                                const ModelConfig& config) {
    TrainingData data;
    data.inputs.resize(manifest.samples.size());
    data.sh_targets.resize(manifest.samples.size());
    data.luv_targets.resize(manifest.samples.size());

    parallel_chunks(manifest.samples.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Sample& s = manifest.samples[i];
            LdrImage mrv = load_png((fs::path(dataset_dir) / s.mrv_path).string());

            LdrImage scaled = (mrv.width != config.input_width ||
                               mrv.height != config.input_height)
                                  ? resize_bilinear(mrv, config.input_width, config.input_height)
                                  : mrv;
            data.inputs[i] = image_to_tensor(scaled);
            data.inputs[i].shape = {3, config.input_height, config.input_width};

            if (static_cast<int>(s.sh_target.size()) != config.sh_outputs())
                throw std::invalid_argument("sample \"" + s.panorama_id +
                                            "\" target size does not match sh_order");
            Tensor target({config.sh_outputs()});
            for (std::size_t k = 0; k < s.sh_target.size(); ++k)
                target.data[k] = static_cast<float>(s.sh_target[k]);
            data.sh_targets[i] = std::move(target);

            if (config.luv_enabled) {
                LdrImage luv = color_convert(mrv, RgbEncoding::gamma, ChromaSpace::luv);
                LdrImage small = resize_bilinear(luv, config.luv_width, config.luv_height);
                Tensor lt = image_to_tensor(small);
                lt.shape = {3, config.luv_height, config.luv_width};
                data.luv_targets[i] = std::move(lt);
            }
        }
    });

    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
        const std::string& split = manifest.samples[i].split;
        if (split == "train") data.train_indices.push_back(static_cast<int>(i));
        else if (split == "val") data.val_indices.push_back(static_cast<int>(i));
        else if (split == "test") data.test_indices.push_back(static_cast<int>(i));
    }
    return data;
}

namespace {

Tensor stack_rows(const std::vector<Tensor>& items, const std::vector<int>& indices, int first,
                  int count) {
    std::vector<int> shape = items[static_cast<std::size_t>(indices[first])].shape;
    shape.insert(shape.begin(), count);
    Tensor out(shape);
    std::size_t elems = items[static_cast<std::size_t>(indices[first])].size();
    for (int r = 0; r < count; ++r)
        std::copy_n(items[static_cast<std::size_t>(indices[first + r])].data.begin(), elems,
                    out.data.begin() + static_cast<std::size_t>(r) * elems);
    return out;
}

struct BatchResult {
    double loss = 0.0;
    std::vector<Tensor> grads;  // per parameter, scaled by the shard weight
};

// Forward+backward over [first, first+count) of `order`; gradients are scaled
// by count/batch_total so shard sums reproduce the full-batch gradient.
BatchResult run_shard(const Model& model, const TrainingData& data,
                      const std::vector<int>& order, int first, int count, int batch_total,
                      std::uint64_t tape_seed, bool train_mode) {
    const ModelConfig& cfg = model.config();
    Tape tape(tape_seed);
    std::vector<Tape::Id> pids;
    pids.reserve(model.params().tensors.size());
    for (const Tensor& t : model.params().tensors) pids.push_back(tape.input(t));

    Tape::Id input = tape.input(stack_rows(data.inputs, order, first, count));
    auto heads = build_forward<float>(tape, cfg, pids, input, train_mode);
    Tape::Id sh_target = tape.input(stack_rows(data.sh_targets, order, first, count));

    Tape::Id loss;
    switch (cfg.loss_mode) {
        case LossMode::render: {
            Tape::Id render = loss_render<float>(tape, heads.sh, sh_target,
                                                 cfg.render_grid_width, cfg.render_grid_height,
                                                 cfg.sh_order);
            if (cfg.luv_enabled) {
                Tape::Id luv_target = tape.input(stack_rows(data.luv_targets, order, first, count));
                Tape::Id luv = tape.mse(heads.luv, luv_target);
                loss = tape.add(tape.scale(render, static_cast<float>(cfg.alpha)),
                                tape.scale(luv, static_cast<float>(1.0 - cfg.alpha)));
            } else {
                loss = render;
            }
            break;
        }
        case LossMode::weighted: {
            if (!cfg.luv_enabled) {
                loss = tape.mse(heads.sh, sh_target);
            } else {
                Tape::Id luv_target = tape.input(stack_rows(data.luv_targets, order, first, count));
                loss = loss_weighted<float>(tape, heads.sh, sh_target, heads.luv, luv_target,
                                            cfg.alpha);
            }
            break;
        }
        case LossMode::banded: {
            Tape::Id banded =
                loss_banded<float>(tape, heads.sh, sh_target, cfg.band_weights, cfg.sh_order);
            if (cfg.luv_enabled) {
                Tape::Id luv_target = tape.input(stack_rows(data.luv_targets, order, first, count));
                Tape::Id luv = tape.mse(heads.luv, luv_target);
                loss = tape.add(tape.scale(banded, static_cast<float>(cfg.alpha)),
                                tape.scale(luv, static_cast<float>(1.0 - cfg.alpha)));
            } else {
                loss = banded;
            }
            break;
        }
        default:
            throw std::invalid_argument("unknown loss mode");
    }

    BatchResult result;
    result.loss = tape.value(loss).data[0];
    if (train_mode) {
        tape.backward(loss);
        const float w = static_cast<float>(count) / static_cast<float>(batch_total);
        result.grads.reserve(pids.size());
        for (Tape::Id id : pids) {
            Tensor g = tape.grad(id);
            for (float& v : g.data) v *= w;
            result.grads.push_back(std::move(g));
        }
    }
    return result;
}

double evaluate_loss(const Model& model, const TrainingData& data,
                     const std::vector<int>& indices, int batch_size) {
    double total = 0.0;
    int done = 0;
    while (done < static_cast<int>(indices.size())) {
        int count = std::min(batch_size, static_cast<int>(indices.size()) - done);
        BatchResult r = run_shard(model, data, indices, done, count,
                                  static_cast<int>(indices.size()), 0, false);
        total += r.loss * count;
        done += count;
    }
    return total / static_cast<double>(indices.size());
}

double evaluate_sh_mse(const Model& model, const TrainingData& data,
                       const std::vector<int>& indices, int batch_size) {
    const ModelConfig& cfg = model.config();
    double total = 0.0;
    int done = 0;
    while (done < static_cast<int>(indices.size())) {
        int count = std::min(batch_size, static_cast<int>(indices.size()) - done);
        Tensor batch = stack_rows(data.inputs, indices, done, count);
        Tensor pred = model.infer_batch(batch);
        for (int r = 0; r < count; ++r) {
            const Tensor& target = data.sh_targets[static_cast<std::size_t>(indices[done + r])];
            double mse = 0.0;
            for (int k = 0; k < cfg.sh_outputs(); ++k) {
                double d = static_cast<double>(
                               pred.data[static_cast<std::size_t>(r) * cfg.sh_outputs() + k]) -
                           target.data[static_cast<std::size_t>(k)];
                mse += d * d;
            }
            total += mse / cfg.sh_outputs();
        }
        done += count;
    }
    return total / static_cast<double>(indices.size());
}

}  // namespace

TrainResult train(const Manifest& manifest, const std::string& dataset_dir,
                  const ModelConfig& config, const TrainRun& run,
                  const std::string& history_csv_path) {
    config.validate();
    if (run.batch_size < 1 || run.max_epochs < 1 || run.patience < 1 || run.shards < 1)
        throw std::invalid_argument("bad training run parameters");

    TrainingData data = load_training_data(manifest, dataset_dir, config);
    if (data.train_indices.empty() || data.val_indices.empty())
        throw std::invalid_argument("manifest needs non-empty train and val splits");

    Model model(config, derive_seed(run.seed, "init"));
    model.set_norm_scale(manifest.norm_scale);

    AdamState adam;
    adam.config.lr = static_cast<float>(run.lr);
    adam.init(model.params().tensors);

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    int epochs_since_best = 0;

    std::ofstream csv;
    if (!history_csv_path.empty()) {
        csv.open(history_csv_path, std::ios::trunc);
        if (!csv) throw std::runtime_error("cannot open " + history_csv_path + " for writing");
        csv << "epoch,train_loss,val_loss,val_sh_mse\n";
    }

    std::vector<int> order = data.train_indices;
    for (int epoch = 0; epoch < run.max_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(run.seed, "epoch/" + std::to_string(epoch)));
        shuffle_rng.shuffle(order);

        double train_loss_sum = 0.0;
        int train_seen = 0;
        for (int start = 0; start < static_cast<int>(order.size()); start += run.batch_size) {
            const int batch = std::min(run.batch_size, static_cast<int>(order.size()) - start);
            const int n_shards = std::min(run.shards, batch);
            const int shard = (batch + n_shards - 1) / n_shards;

            std::vector<BatchResult> shard_results(
                static_cast<std::size_t>((batch + shard - 1) / shard));
            parallel_chunks(shard_results.size(), [&](std::size_t begin, std::size_t end) {
                for (std::size_t si = begin; si < end; ++si) {
                    int first = start + static_cast<int>(si) * shard;
                    int count = std::min(shard, start + batch - first);
                    std::uint64_t tape_seed = derive_seed(
                        run.seed, "step/" + std::to_string(epoch) + "/" + std::to_string(start) +
                                      "/" + std::to_string(si));
                    shard_results[si] =
                        run_shard(model, data, order, first, count, batch, tape_seed, true);
                }
            });

            // shard-ordered reduction keeps the update identical to a serial
            // run of the same decomposition
            std::vector<Tensor> grads = std::move(shard_results[0].grads);
            double loss = shard_results[0].loss *
                          (static_cast<double>(std::min(shard, batch)) / batch);
            for (std::size_t si = 1; si < shard_results.size(); ++si) {
                int first = static_cast<int>(si) * shard;
                int count = std::min(shard, batch - first);
                loss += shard_results[si].loss * (static_cast<double>(count) / batch);
                for (std::size_t p = 0; p < grads.size(); ++p)
                    for (std::size_t k = 0; k < grads[p].data.size(); ++k)
                        grads[p].data[k] += shard_results[si].grads[p].data[k];
            }

            if (!std::isfinite(loss)) throw numeric_error("training loss became non-finite");
            adam_step(model.params().tensors, grads, adam);
            train_loss_sum += loss * batch;
            train_seen += batch;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = train_loss_sum / std::max(1, train_seen);
        stats.val_loss = evaluate_loss(model, data, data.val_indices, run.batch_size);
        stats.val_sh_mse = evaluate_sh_mse(model, data, data.val_indices, run.batch_size);
        result.history.push_back(stats);
        if (csv.is_open())
            csv << stats.epoch << "," << stats.train_loss << "," << stats.val_loss << ","
                << stats.val_sh_mse << "\n";

        if (stats.val_loss < result.best_val_loss) {
            result.best_val_loss = stats.val_loss;
            result.best_epoch = epoch;
            result.best = model.to_checkpoint();
            result.best.has_optimizer = true;
            result.best.adam_step_count = adam.step;
            result.best.adam_m = adam.m;
            result.best.adam_v = adam.v;
            epochs_since_best = 0;
        } else if (++epochs_since_best >= run.patience) {
            break;
        }
    }
    return result;
}

// explicit instantiations for the training dtype and the gradient-check dtype
template ModelParamsT<float> init_params<float>(const ModelConfig&, std::uint64_t);
template ModelParamsT<double> init_params<double>(const ModelConfig&, std::uint64_t);
template ModelHeadsT<float> build_forward<float>(TapeT<float>&, const ModelConfig&,
                                                 const std::vector<int>&, int, bool);
template ModelHeadsT<double> build_forward<double>(TapeT<double>&, const ModelConfig&,
                                                   const std::vector<int>&, int, bool);
template int loss_weighted<float>(TapeT<float>&, int, int, int, int, double);
template int loss_weighted<double>(TapeT<double>&, int, int, int, int, double);
template int loss_banded<float>(TapeT<float>&, int, int, std::array<double, 3>, int);
template int loss_banded<double>(TapeT<double>&, int, int, std::array<double, 3>, int);
template int loss_render<float>(TapeT<float>&, int, int, int, int, int);
template int loss_render<double>(TapeT<double>&, int, int, int, int, int);

}  // namespace shlight
