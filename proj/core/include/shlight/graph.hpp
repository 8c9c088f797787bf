#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "shlight/random.hpp"
#include "shlight/tensor.hpp"

namespace shlight {

// Reverse-mode tape. Ops execute eagerly, recording themselves with their
// cached activations; backward() walks the record in reverse and fills the
// gradient accumulators. One tape is single-writer; distinct tapes may run
// on different threads freely.
template <class S>
class TapeT {
public:
    using Id = int;

    explicit TapeT(std::uint64_t seed = 0) : rng_(seed) {}

    Id input(TensorT<S> value);

    // image ops operate on NCHW
    Id conv2d(Id x, Id w, Id b, int stride, int pad);
    Id maxpool2d(Id x, int kernel, int stride);
    Id relu(Id x);
    Id softsign(Id x);
    Id fully_connected(Id x, Id w, Id b);  // x [N,D], w [D,O], b [O]
    Id dropout(Id x, S p, bool train_mode);
    Id concat_channels(Id a, Id b);
    Id add(Id a, Id b);
    Id mul(Id a, Id b);
    Id scale(Id x, S k);
    Id bilinear_resize(Id x, int out_h, int out_w);
    Id global_avg_pool(Id x);  // [N,C,H,W] -> [N,C]
    Id reshape(Id x, std::vector<int> shape);
    Id mse(Id a, Id b);  // scalar

    const TensorT<S>& value(Id id) const { return node(id).out; }

    // Seeds d(output)/d(output) = 1 and accumulates exact reverse-mode
    // gradients into every node; accumulators are zeroed first. The output
    // must be scalar.
    void backward(Id output);

    const TensorT<S>& grad(Id id) const;

    std::size_t node_count() const { return nodes_.size(); }
    Rng& rng() { return rng_; }

private:
    enum class Op {
        leaf,
        conv2d,
        maxpool2d,
        relu,
        softsign,
        fc,
        dropout,
        concat,
        add,
        mul,
        scale,
        resize,
        gap,
        reshape,
        mse,
    };

    struct Node {
        Op op;
        std::vector<Id> inputs;
        TensorT<S> out;
        TensorT<S> grad;           // same shape as out; allocated by backward
        // op parameters
        int stride = 0, pad = 0, kernel = 0;
        S scalar = S(0);
        std::vector<int> aux_int;  // maxpool argmax indices
        std::vector<S> aux_s;      // dropout mask
    };

    Node& node(Id id);
    const Node& node(Id id) const;
    Id push(Node n);
    void check_same_shape(const char* what, Id a, Id b) const;

    std::vector<Node> nodes_;
    Rng rng_;
};

using Tape = TapeT<float>;

// Central finite differences: (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
// Verification oracle for backward(); f must be scalar-valued.
template <class S>
TensorT<S> finite_diff_grad(const std::function<S(const TensorT<S>&)>& f, const TensorT<S>& x,
                            S eps);

// ------------------------------------------------------------------ Adam --

template <class S>
struct AdamConfigT {
    S lr = S(1e-4);
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S eps = S(1e-8);
};

template <class S>
struct AdamStateT {
    AdamConfigT<S> config;
    long long step = 0;
    std::vector<TensorT<S>> m;  // first moments, one per parameter
    std::vector<TensorT<S>> v;  // second moments

    void init(const std::vector<TensorT<S>>& params) {
        step = 0;
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p.shape);
            v.emplace_back(p.shape);
        }
    }
};

// Standard bias-corrected update, in place.
template <class S>
void adam_step(std::vector<TensorT<S>>& params, const std::vector<TensorT<S>>& grads,
               AdamStateT<S>& state);

using AdamConfig = AdamConfigT<float>;
using AdamState = AdamStateT<float>;

}  // namespace shlight
