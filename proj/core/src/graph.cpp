#include "shlight/graph.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "shlight/errors.hpp"

namespace shlight {

namespace {

template <class S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// im2col for one image: x [C,H,W] -> cols [C*kh*kw, OH*OW], zero padding.
template <class S>
void im2col(const S* x, int C, int H, int W, int k, int stride, int pad, int OH, int OW,
            S* cols) {
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                S* row = cols + ((static_cast<std::size_t>(c) * k + i) * k + j) *
                                    (static_cast<std::size_t>(OH) * OW);
                for (int oy = 0; oy < OH; ++oy) {
                    int y = oy * stride - pad + i;
                    for (int ox = 0; ox < OW; ++ox) {
                        int xx = ox * stride - pad + j;
                        row[oy * OW + ox] =
                            (y >= 0 && y < H && xx >= 0 && xx < W)
                                ? x[(static_cast<std::size_t>(c) * H + y) * W + xx]
                                : S(0);
                    }
                }
            }
}

template <class S>
void col2im_add(const S* cols, int C, int H, int W, int k, int stride, int pad, int OH, int OW,
                S* dx) {
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                const S* row = cols + ((static_cast<std::size_t>(c) * k + i) * k + j) *
                                          (static_cast<std::size_t>(OH) * OW);
                for (int oy = 0; oy < OH; ++oy) {
                    int y = oy * stride - pad + i;
                    if (y < 0 || y >= H) continue;
                    for (int ox = 0; ox < OW; ++ox) {
                        int xx = ox * stride - pad + j;
                        if (xx < 0 || xx >= W) continue;
                        dx[(static_cast<std::size_t>(c) * H + y) * W + xx] += row[oy * OW + ox];
                    }
                }
            }
}

}  // namespace

template <class S>
typename TapeT<S>::Node& TapeT<S>::node(Id id) {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw std::invalid_argument("unknown graph node " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
}

template <class S>
const typename TapeT<S>::Node& TapeT<S>::node(Id id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw std::invalid_argument("unknown graph node " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
}

template <class S>
typename TapeT<S>::Id TapeT<S>::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

template <class S>
void TapeT<S>::check_same_shape(const char* what, Id a, Id b) const {
    if (node(a).out.shape != node(b).out.shape)
        throw std::invalid_argument(std::string(what) + " (node " +
                                    std::to_string(nodes_.size()) + "): shape mismatch " +
                                    node(a).out.shape_str() + " vs " + node(b).out.shape_str());
}

template <class S>
typename TapeT<S>::Id TapeT<S>::input(TensorT<S> value) {
    Node n;
    n.op = Op::leaf;
    n.out = std::move(value);
    return push(std::move(n));
}

template <class S>
typename TapeT<S>::Id TapeT<S>::conv2d(Id x, Id w, Id b, int stride, int pad) {
    const auto& xt = node(x).out;
    const auto& wt = node(w).out;
    const auto& bt = node(b).out;
    std::string where = "conv2d (node " + std::to_string(nodes_.size()) + ")";
    if (xt.ndim() != 4 || wt.ndim() != 4 || bt.ndim() != 1)
        throw std::invalid_argument(where + ": expects x[N,C,H,W], w[K,C,kh,kw], b[K]");
    if (wt.dim(2) != wt.dim(3))
        throw std::invalid_argument(where + ": only square kernels are supported");
    if (xt.dim(1) != wt.dim(1))
        throw std::invalid_argument(where + ": input channels " + std::to_string(xt.dim(1)) +
                                    " != weight channels " + std::to_string(wt.dim(1)));
    if (bt.dim(0) != wt.dim(0))
        throw std::invalid_argument(where + ": bias size != output channels");
    if (stride < 1 || pad < 0) throw std::invalid_argument(where + ": bad stride/pad");

    const int N = xt.dim(0), C = xt.dim(1), H = xt.dim(2), W = xt.dim(3);
    const int K = wt.dim(0), k = wt.dim(2);
    const int OH = (H + 2 * pad - k) / stride + 1;
    const int OW = (W + 2 * pad - k) / stride + 1;
    if (OH < 1 || OW < 1) throw std::invalid_argument(where + ": kernel larger than input");

    Node n;
    n.op = Op::conv2d;
    n.inputs = {x, w, b};
    n.stride = stride;
    n.pad = pad;
    n.kernel = k;
    n.out = TensorT<S>({N, K, OH, OW});

    const int ckk = C * k * k;
    const int ohw = OH * OW;
    std::vector<S> cols(static_cast<std::size_t>(ckk) * ohw);
    Eigen::Map<const MatRM<S>> wmat(wt.data.data(), K, ckk);
    for (int img = 0; img < N; ++img) {
        im2col(xt.data.data() + static_cast<std::size_t>(img) * C * H * W, C, H, W, k, stride,
               pad, OH, OW, cols.data());
        Eigen::Map<const MatRM<S>> cmat(cols.data(), ckk, ohw);
        Eigen::Map<MatRM<S>> omat(n.out.data.data() + static_cast<std::size_t>(img) * K * ohw, K,
                                  ohw);
        omat.noalias() = wmat * cmat;
        for (int och = 0; och < K; ++och) omat.row(och).array() += bt.data[och];
    }
    return push(std::move(n));
}

template <class S>
typename TapeT<S>::Id TapeT<S>::maxpool2d(Id x, int kernel, int stride) {
    const auto& xt = node(x).out;
    std::string where = "maxpool2d (node " + std::to_string(nodes_.size()) + ")";
    if (xt.ndim() != 4) throw std::invalid_argument(where + ": expects [N,C,H,W]");
    if (kernel < 1 || stride < 1) throw std::invalid_argument(where + ": bad kernel/stride");
    const int N = xt.dim(0), C = xt.dim(1), H = xt.dim(2), W = xt.dim(3);
    const int OH = (H - kernel) / stride + 1;
    const int OW = (W - kernel) / stride + 1;
    if (OH < 1 || OW < 1) throw std::invalid_argument(where + ": window larger than input");

    Node n;
    n.op = Op::maxpool2d;
    n.inputs = {x};
    n.kernel = kernel;
    n.stride = stride;
    n.out = TensorT<S>({N, C, OH, OW});
    n.aux_int.resize(n.out.size());

    std::size_t o = 0;
    for (int img = 0; img < N; ++img)
        for (int c = 0; c < C; ++c) {
            const S* plane =
                xt.data.data() + (static_cast<std::size_t>(img) * C + c) * H * W;
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox, ++o) {
                    int best = (oy * stride) * W + ox * stride;
                    S best_v = plane[best];
                    for (int i = 0; i < kernel; ++i)
                        for (int j = 0; j < kernel; ++j) {
                            int idx = (oy * stride + i) * W + ox * stride + j;
                            if (plane[idx] > best_v) {  // ties keep the first index
                                best_v = plane[idx];
                                best = idx;
                            }
                        }
                    n.out.data[o] = best_v;
                    n.aux_int[o] =
                        static_cast<int>((static_cast<std::size_t>(img) * C + c) * H * W) + best;
                }
        }
    return push(std::move(n));
}

template <class S>
typename TapeT<S>::Id TapeT<S>::relu(Id x) {
    Node n;
    n.op = Op::relu;
    n.inputs = {x};
    n.out = node(x).out;
    for (S& v : n.out.data) v = std::max(v, S(0));
    return push(std::move(n));
}

template <class S>
typename TapeT<S>::Id TapeT<S>::softsign(Id x) {
    Node n;
    n.op = Op::softsign;
    n.inputs = {x};
    n.out = node(x).out;
    for (S& v : n.out.data) v = v / (S(1) + std::abs(v));
    return push(std::move(n));
}

template <class S>
typename TapeT<S>::Id TapeT<S>::fully_connected(Id x, Id w, Id b) {
    const auto& xt = node(x).out;
    const auto& wt = node(w).out;
    const auto& bt = node(b).out;
    std::string where = "fully_connected (node " + std::to_string(nodes_.size()) + ")";
    if (xt.ndim() != 2 || wt.ndim() != 2 || bt.ndim() != 1)
        throw std::invalid_argument(where + ": expects x[N,D], w[D,O], b[O]");
    if (xt.dim(1) != wt.dim(0))
        throw std::invalid_argument(where + ": inner dims " + std::to_string(xt.dim(1)) +
                                    " != " + std::to_string(wt.dim(0)));
    if (bt.dim(0) != wt.dim(1)) throw std::invalid_argument(where + ": bias size mismatch");

    const int N = xt.dim(0), D = xt.dim(1), O = wt.dim(1);
    Node n;
    n.op = Op::fc;
    n.inputs = {x, w, b};
    n.out = TensorT<S>({N, O});
    Eigen::Map<const MatRM<S>> xm(xt.data.data(), N, D);
    Eigen::Map<const MatRM<S>> wm(wt.data.data(), D, O);
    Eigen::Map<MatRM<S>> om(n.out.data.data(), N, O);
    om.noalias() = xm * wm;
    for (int r = 0; r < N; ++r)
        for (int c = 0; c < O; ++c) om(r, c) += bt.data[c];
    return push(std::move(n));
}

template <class S>
typename TapeT<S>::Id TapeT<S>::dropout(Id x, S p, bool train_mode) {
    if (!(p >= S(0) && p < S(1)))
        throw std::invalid_argument("dropout probability must be in [0, 1)");
    Node n;
    n.op = Op::dropout;
    n.inputs = {x};
    n.out = node(x).out;
    if (train_mode && p > S(0)) {
        // inverted dropout: surviving activations scale by 1/(1-p)
        n.aux_s.resize(n.out.size());
        const S keep = S(1) - p;
        for (std::size_t i = 0; i < n.out.size(); ++i) {
            S mask = rng_.uniform() < static_cast<double>(p) ? S(0) : S(1) / keep;
            n.aux_s[i] = mask;
            n.out.data[i] *= mask;
        }
    }
    return push(std::move(n));
}

template <class S>
typename TapeT<S>::Id TapeT<S>::concat_channels(Id a, Id b) {
    const auto& at = node(a).out;
    const auto& bt = node(b).out;
    std::string where = "concat_channels (node " + std::to_string(nodes_.size()) + ")";
    if (at.ndim() != 4 || bt.ndim() != 4)
        throw std::invalid_argument(where + ": expects [N,C,H,W]");
    if (at.dim(0) != bt.dim(0) || at.dim(2) != bt.dim(2) || at.dim(3) != bt.dim(3))
        throw std::invalid_argument(where + ": non-channel dims differ " + at.shape_str() +
                                    " vs " + bt.shape_str());

    const int N = at.dim(0), Ca = at.dim(1), Cb = bt.dim(1), H = at.dim(2), W = at.dim(3);
    Node n;
    n.op = Op::concat;
    n.inputs = {a, b};
    n.out = TensorT<S>({N, Ca + Cb, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int img = 0; img < N; ++img) {
        std::copy_n(at.data.data() + static_cast<std::size_t>(img) * Ca * plane, Ca * plane,
                    n.out.data.data() + static_cast<std::size_t>(img) * (Ca + Cb) * plane);
        std::copy_n(bt.data.data() + static_cast<std::size_t>(img) * Cb * plane, Cb * plane,
                    n.out.data.data() + (static_cast<std::size_t>(img) * (Ca + Cb) + Ca) * plane);
    }
    return push(std::move(n));
}

template <class S>
typename TapeT<S>::Id TapeT<S>::add(Id a, Id b) {
    check_same_shape("add", a, b);
    Node n;
    n.op = Op::add;
    n.inputs = {a, b};
    n.out = node(a).out;
    const auto& bd = node(b).out.data;
    for (std::size_t i = 0; i < n.out.size(); ++i) n.out.data[i] += bd[i];
    return push(std::move(n));
}

template <class S>
typename TapeT<S>::Id TapeT<S>::mul(Id a, Id b) {
    check_same_shape("mul", a, b);
    Node n;
    n.op = Op::mul;
    n.inputs = {a, b};
    n.out = node(a).out;
    const auto& bd = node(b).out.data;
    for (std::size_t i = 0; i < n.out.size(); ++i) n.out.data[i] *= bd[i];
    return push(std::move(n));
}

template <class S>
typename TapeT<S>::Id TapeT<S>::scale(Id x, S k) {
    Node n;
    n.op = Op::scale;
    n.inputs = {x};
    n.scalar = k;
    n.out = node(x).out;
    for (S& v : n.out.data) v *= k;
    return push(std::move(n));
}

template <class S>
typename TapeT<S>::Id TapeT<S>::bilinear_resize(Id x, int out_h, int out_w) {
    const auto& xt = node(x).out;
    std::string where = "bilinear_resize (node " + std::to_string(nodes_.size()) + ")";
    if (xt.ndim() != 4) throw std::invalid_argument(where + ": expects [N,C,H,W]");
    if (out_h < 1 || out_w < 1) throw std::invalid_argument(where + ": bad target size");

    const int N = xt.dim(0), C = xt.dim(1), H = xt.dim(2), W = xt.dim(3);
    Node n;
    n.op = Op::resize;
    n.inputs = {x};
    n.out = TensorT<S>({N, C, out_h, out_w});

    const double sy = static_cast<double>(H) / out_h;
    const double sx = static_cast<double>(W) / out_w;
    std::size_t o = 0;
    for (int img = 0; img < N; ++img)
        for (int c = 0; c < C; ++c) {
            const S* plane = xt.data.data() + (static_cast<std::size_t>(img) * C + c) * H * W;
            for (int oy = 0; oy < out_h; ++oy) {
                double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
                int y0 = static_cast<int>(fy);
                int y1 = std::min(y0 + 1, H - 1);
                double wy = fy - y0;
                for (int ox = 0; ox < out_w; ++ox, ++o) {
                    double fx =
                        std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
                    int x0 = static_cast<int>(fx);
                    int x1 = std::min(x0 + 1, W - 1);
                    double wx = fx - x0;
                    double top = plane[y0 * W + x0] * (1 - wx) + plane[y0 * W + x1] * wx;
                    double bot = plane[y1 * W + x0] * (1 - wx) + plane[y1 * W + x1] * wx;
                    n.out.data[o] = static_cast<S>(top * (1 - wy) + bot * wy);
                }
            }
        }
    return push(std::move(n));
}

template <class S>
typename TapeT<S>::Id TapeT<S>::global_avg_pool(Id x) {
    const auto& xt = node(x).out;
    std::string where = "global_avg_pool (node " + std::to_string(nodes_.size()) + ")";
    if (xt.ndim() != 4) throw std::invalid_argument(where + ": expects [N,C,H,W]");
    const int N = xt.dim(0), C = xt.dim(1), H = xt.dim(2), W = xt.dim(3);

    Node n;
    n.op = Op::gap;
    n.inputs = {x};
    n.out = TensorT<S>({N, C});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int img = 0; img < N; ++img)
        for (int c = 0; c < C; ++c) {
            const S* p = xt.data.data() + (static_cast<std::size_t>(img) * C + c) * plane;
            S sum = S(0);
            for (std::size_t i = 0; i < plane; ++i) sum += p[i];
            n.out.data[static_cast<std::size_t>(img) * C + c] = sum / static_cast<S>(plane);
        }
    return push(std::move(n));
}

template <class S>
typename TapeT<S>::Id TapeT<S>::reshape(Id x, std::vector<int> shape) {
    const auto& xt = node(x).out;
    if (TensorT<S>::count(shape) != xt.size())
        throw std::invalid_argument("reshape (node " + std::to_string(nodes_.size()) +
                                    "): element count mismatch");
    Node n;
    n.op = Op::reshape;
    n.inputs = {x};
    n.out = xt;
    n.out.shape = std::move(shape);
    return push(std::move(n));
}

template <class S>
typename TapeT<S>::Id TapeT<S>::mse(Id a, Id b) {
    check_same_shape("mse", a, b);
    Node n;
    n.op = Op::mse;
    n.inputs = {a, b};
    n.out = TensorT<S>({1});
    const auto& ad = node(a).out.data;
    const auto& bd = node(b).out.data;
    double sum = 0.0;
    for (std::size_t i = 0; i < ad.size(); ++i) {
        double d = static_cast<double>(ad[i]) - static_cast<double>(bd[i]);
        sum += d * d;
    }
    n.out.data[0] = static_cast<S>(sum / static_cast<double>(ad.size()));
    return push(std::move(n));
}

template <class S>
const TensorT<S>& TapeT<S>::grad(Id id) const {
    const Node& n = node(id);
    if (n.grad.size() == 0) throw invalid_state("gradients not computed; run backward first");
    return n.grad;
}

template <class S>
void TapeT<S>::backward(Id output) {
    if (nodes_.empty()) throw invalid_state("backward before forward: the graph is empty");
    Node& out_node = node(output);
    if (out_node.out.size() != 1)
        throw std::invalid_argument("backward requires a scalar output node");

    for (Node& n : nodes_) {
        n.grad = TensorT<S>(n.out.shape);  // zeroed accumulators
    }
    out_node.grad.data[0] = S(1);

    for (Id id = output; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        bool any = false;
        for (S g : n.grad.data)
            if (g != S(0)) {
                any = true;
                break;
            }
        if (!any || n.op == Op::leaf) continue;

        switch (n.op) {
            case Op::conv2d: {
                const Node& xn = node(n.inputs[0]);
                const Node& wn = node(n.inputs[1]);
                Node& xg = node(n.inputs[0]);
                Node& wg = node(n.inputs[1]);
                Node& bg = node(n.inputs[2]);
                const int N = xn.out.dim(0), C = xn.out.dim(1), H = xn.out.dim(2),
                          W = xn.out.dim(3);
                const int K = wn.out.dim(0), k = n.kernel;
                const int OH = n.out.dim(2), OW = n.out.dim(3);
                const int ckk = C * k * k, ohw = OH * OW;

                std::vector<S> cols(static_cast<std::size_t>(ckk) * ohw);
                std::vector<S> dcols(static_cast<std::size_t>(ckk) * ohw);
                Eigen::Map<const MatRM<S>> wmat(wn.out.data.data(), K, ckk);
                Eigen::Map<MatRM<S>> dw(wg.grad.data.data(), K, ckk);
                for (int img = 0; img < N; ++img) {
                    Eigen::Map<const MatRM<S>> dout(
                        n.grad.data.data() + static_cast<std::size_t>(img) * K * ohw, K, ohw);
                    im2col(xn.out.data.data() + static_cast<std::size_t>(img) * C * H * W, C, H,
                           W, k, n.stride, n.pad, OH, OW, cols.data());
                    Eigen::Map<const MatRM<S>> cmat(cols.data(), ckk, ohw);
                    dw.noalias() += dout * cmat.transpose();
                    Eigen::Map<MatRM<S>> dc(dcols.data(), ckk, ohw);
                    dc.noalias() = wmat.transpose() * dout;
                    col2im_add(dcols.data(), C, H, W, k, n.stride, n.pad, OH, OW,
                               xg.grad.data.data() + static_cast<std::size_t>(img) * C * H * W);
                    for (int och = 0; och < K; ++och) bg.grad.data[och] += dout.row(och).sum();
                }
                break;
            }
            case Op::maxpool2d: {
                Node& xg = node(n.inputs[0]);
                for (std::size_t i = 0; i < n.out.size(); ++i)
                    xg.grad.data[static_cast<std::size_t>(n.aux_int[i])] += n.grad.data[i];
                break;
            }
            case Op::relu: {
                Node& xg = node(n.inputs[0]);
                const auto& x = node(n.inputs[0]).out.data;
                for (std::size_t i = 0; i < n.out.size(); ++i)
                    if (x[i] > S(0)) xg.grad.data[i] += n.grad.data[i];
                break;
            }
            case Op::softsign: {
                Node& xg = node(n.inputs[0]);
                const auto& x = node(n.inputs[0]).out.data;
                for (std::size_t i = 0; i < n.out.size(); ++i) {
                    S d = S(1) + std::abs(x[i]);
                    xg.grad.data[i] += n.grad.data[i] / (d * d);
                }
                break;
            }
            case Op::fc: {
                const Node& xn = node(n.inputs[0]);
                const Node& wn = node(n.inputs[1]);
                Node& xg = node(n.inputs[0]);
                Node& wg = node(n.inputs[1]);
                Node& bg = node(n.inputs[2]);
                const int N = xn.out.dim(0), D = xn.out.dim(1), O = wn.out.dim(1);
                Eigen::Map<const MatRM<S>> xm(xn.out.data.data(), N, D);
                Eigen::Map<const MatRM<S>> wm(wn.out.data.data(), D, O);
                Eigen::Map<const MatRM<S>> dout(n.grad.data.data(), N, O);
                Eigen::Map<MatRM<S>> dx(xg.grad.data.data(), N, D);
                Eigen::Map<MatRM<S>> dw(wg.grad.data.data(), D, O);
                dx.noalias() += dout * wm.transpose();
                dw.noalias() += xm.transpose() * dout;
                for (int c = 0; c < O; ++c) bg.grad.data[c] += dout.col(c).sum();
                break;
            }
            case Op::dropout: {
                Node& xg = node(n.inputs[0]);
                if (n.aux_s.empty()) {
                    for (std::size_t i = 0; i < n.out.size(); ++i)
                        xg.grad.data[i] += n.grad.data[i];
                } else {
                    for (std::size_t i = 0; i < n.out.size(); ++i)
                        xg.grad.data[i] += n.grad.data[i] * n.aux_s[i];
                }
                break;
            }
            case Op::concat: {
                Node& ag = node(n.inputs[0]);
                Node& bg = node(n.inputs[1]);
                const int N = ag.out.dim(0), Ca = ag.out.dim(1), Cb = bg.out.dim(1);
                const std::size_t plane =
                    static_cast<std::size_t>(ag.out.dim(2)) * ag.out.dim(3);
                for (int img = 0; img < N; ++img) {
                    const S* src =
                        n.grad.data.data() + static_cast<std::size_t>(img) * (Ca + Cb) * plane;
                    S* da = ag.grad.data.data() + static_cast<std::size_t>(img) * Ca * plane;
                    S* db = bg.grad.data.data() + static_cast<std::size_t>(img) * Cb * plane;
                    for (std::size_t i = 0; i < Ca * plane; ++i) da[i] += src[i];
                    for (std::size_t i = 0; i < Cb * plane; ++i) db[i] += src[Ca * plane + i];
                }
                break;
            }
            case Op::add: {
                Node& ag = node(n.inputs[0]);
                Node& bg = node(n.inputs[1]);
                for (std::size_t i = 0; i < n.out.size(); ++i) {
                    ag.grad.data[i] += n.grad.data[i];
                    bg.grad.data[i] += n.grad.data[i];
                }
                break;
            }
            case Op::mul: {
                Node& ag = node(n.inputs[0]);
                Node& bg = node(n.inputs[1]);
                const auto& av = node(n.inputs[0]).out.data;
                const auto& bv = node(n.inputs[1]).out.data;
                for (std::size_t i = 0; i < n.out.size(); ++i) {
                    ag.grad.data[i] += n.grad.data[i] * bv[i];
                    bg.grad.data[i] += n.grad.data[i] * av[i];
                }
                break;
            }
            case Op::scale: {
                Node& xg = node(n.inputs[0]);
                for (std::size_t i = 0; i < n.out.size(); ++i)
                    xg.grad.data[i] += n.grad.data[i] * n.scalar;
                break;
            }
            case Op::resize: {
                Node& xg = node(n.inputs[0]);
                const Node& xn = node(n.inputs[0]);
                const int N = xn.out.dim(0), C = xn.out.dim(1), H = xn.out.dim(2),
                          W = xn.out.dim(3);
                const int OH = n.out.dim(2), OW = n.out.dim(3);
                const double sy = static_cast<double>(H) / OH;
                const double sx = static_cast<double>(W) / OW;
                std::size_t o = 0;
                for (int img = 0; img < N; ++img)
                    for (int c = 0; c < C; ++c) {
                        S* dplane =
                            xg.grad.data.data() + (static_cast<std::size_t>(img) * C + c) * H * W;
                        for (int oy = 0; oy < OH; ++oy) {
                            double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0,
                                                   static_cast<double>(H - 1));
                            int y0 = static_cast<int>(fy);
                            int y1 = std::min(y0 + 1, H - 1);
                            double wy = fy - y0;
                            for (int ox = 0; ox < OW; ++ox, ++o) {
                                double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0,
                                                       static_cast<double>(W - 1));
                                int x0 = static_cast<int>(fx);
                                int x1 = std::min(x0 + 1, W - 1);
                                double wx = fx - x0;
                                S g = n.grad.data[o];
                                dplane[y0 * W + x0] += static_cast<S>(g * (1 - wx) * (1 - wy));
                                dplane[y0 * W + x1] += static_cast<S>(g * wx * (1 - wy));
                                dplane[y1 * W + x0] += static_cast<S>(g * (1 - wx) * wy);
                                dplane[y1 * W + x1] += static_cast<S>(g * wx * wy);
                            }
                        }
                    }
                break;
            }
            case Op::gap: {
                Node& xg = node(n.inputs[0]);
                const int N = xg.out.dim(0), C = xg.out.dim(1);
                const std::size_t plane =
                    static_cast<std::size_t>(xg.out.dim(2)) * xg.out.dim(3);
                for (int img = 0; img < N; ++img)
                    for (int c = 0; c < C; ++c) {
                        S g = n.grad.data[static_cast<std::size_t>(img) * C + c] /
                              static_cast<S>(plane);
                        S* p = xg.grad.data.data() +
                               (static_cast<std::size_t>(img) * C + c) * plane;
                        for (std::size_t i = 0; i < plane; ++i) p[i] += g;
                    }
                break;
            }
            case Op::reshape: {
                Node& xg = node(n.inputs[0]);
                for (std::size_t i = 0; i < n.out.size(); ++i)
                    xg.grad.data[i] += n.grad.data[i];
                break;
            }
            case Op::mse: {
                Node& ag = node(n.inputs[0]);
                Node& bg = node(n.inputs[1]);
                const auto& av = node(n.inputs[0]).out.data;
                const auto& bv = node(n.inputs[1]).out.data;
                const S g = n.grad.data[0];
                const S inv = S(2) / static_cast<S>(av.size());
                for (std::size_t i = 0; i < av.size(); ++i) {
                    S d = (av[i] - bv[i]) * inv * g;
                    ag.grad.data[i] += d;
                    bg.grad.data[i] -= d;
                }
                break;
            }
            case Op::leaf:
                break;
        }
    }
}

template <class S>
TensorT<S> finite_diff_grad(const std::function<S(const TensorT<S>&)>& f, const TensorT<S>& x,
                            S eps) {
    TensorT<S> g(x.shape);
    TensorT<S> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        S v = x.data[i];
        probe.data[i] = v + eps;
        S hi = f(probe);
        probe.data[i] = v - eps;
        S lo = f(probe);
        probe.data[i] = v;
        g.data[i] = (hi - lo) / (S(2) * eps);
    }
    return g;
}

template <class S>
void adam_step(std::vector<TensorT<S>>& params, const std::vector<TensorT<S>>& grads,
               AdamStateT<S>& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    state.step += 1;
    const auto& c = state.config;
    const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(c.beta1), state.step));
    const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(c.beta2), state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (params[p].shape != grads[p].shape || params[p].shape != state.m[p].shape)
            throw std::invalid_argument("adam_step: shape mismatch at parameter " +
                                        std::to_string(p));
        auto& m = state.m[p].data;
        auto& v = state.v[p].data;
        auto& w = params[p].data;
        const auto& g = grads[p].data;
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = c.beta1 * m[i] + (S(1) - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (S(1) - c.beta2) * g[i] * g[i];
            S mhat = m[i] / bc1;
            S vhat = v[i] / bc2;
            w[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

template class TapeT<float>;
template class TapeT<double>;
template TensorT<float> finite_diff_grad<float>(const std::function<float(const TensorT<float>&)>&,
                                                const TensorT<float>&, float);
template TensorT<double> finite_diff_grad<double>(
    const std::function<double(const TensorT<double>&)>&, const TensorT<double>&, double);
template void adam_step<float>(std::vector<TensorT<float>>&, const std::vector<TensorT<float>>&,
                               AdamStateT<float>&);
template void adam_step<double>(std::vector<TensorT<double>>&,
                                const std::vector<TensorT<double>>&, AdamStateT<double>&);

}  // namespace shlight
