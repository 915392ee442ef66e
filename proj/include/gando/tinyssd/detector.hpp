#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gando/core/error.hpp"
#include "gando/core/hash.hpp"
#include "gando/core/image.hpp"
#include "gando/core/rng.hpp"
#include "gando/core/tensor.hpp"
#include "gando/tinyssd/anchors.hpp"

namespace gando::tinyssd {

enum class Activation { relu, leaky_relu };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "leaky_relu"; }
inline Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "leaky_relu") return Activation::leaky_relu;
    throw ConfigError("unknown activation '" + s + "' (expected relu|leaky_relu)");
}

/// Architecture knobs. Four conv(3x3)->activation->maxpool(2) blocks; detection heads
/// (3x3 convs for class logits and box offsets) read the outputs of blocks 3 and 4.
struct DetectorConfig {
    int image_size = 96;
    int in_channels = 3;
    int num_classes = 3;
    std::array<int, 4> widths{8, 16, 32, 48};
    std::vector<double> aspect_ratios{1.0, 2.0, 0.5};
    std::vector<double> anchor_scales{0.2, 0.38};
    Activation activation = Activation::leaky_relu;
    std::uint64_t init_seed = 1;

    int num_scores() const noexcept { return num_classes + 1; }
    int anchors_per_cell() const noexcept { return static_cast<int>(aspect_ratios.size()); }
    std::vector<int> grid_sizes() const { return {image_size / 8, image_size / 16}; }

    int num_anchors() const {
        int n = 0;
        for (int g : grid_sizes()) n += g * g * anchors_per_cell();
        return n;
    }

    AnchorSet anchors() const { return build_anchors(image_size, grid_sizes(), aspect_ratios, anchor_scales); }

    void validate() const {
        if (image_size < 16 || image_size % 16 != 0) throw ConfigError("detector image_size must be a positive multiple of 16");
        if (num_classes < 1) throw ConfigError("detector needs at least one class");
        for (int w : widths)
            if (w < 1) throw ConfigError("block widths must be positive");
        if (aspect_ratios.empty()) throw ConfigError("need at least one aspect ratio");
        if (anchor_scales.size() != 2) throw ConfigError("need one anchor scale per detection grid (2)");
    }

    /// Canonical string identifying the parameter layout (not the init seed).
    std::string canonical() const {
        std::string s = "image_size=" + std::to_string(image_size) + " in=" + std::to_string(in_channels) +
                        " classes=" + std::to_string(num_classes) + " widths=";
        for (int i = 0; i < 4; ++i) s += (i ? "," : "") + std::to_string(widths[i]);
        s += " ratios=";
        for (std::size_t i = 0; i < aspect_ratios.size(); ++i) s += (i ? "," : "") + exact_double(aspect_ratios[i]);
        s += " scales=";
        for (std::size_t i = 0; i < anchor_scales.size(); ++i) s += (i ? "," : "") + exact_double(anchor_scales[i]);
        s += " activation=" + to_string(activation);
        return s;
    }
};

/// Raw head output for one image: per-anchor class logits and box offsets.
template <class T>
struct DetectionOutput {
    int num_anchors = 0;
    int num_scores = 0;  // classes + background
    std::vector<T> logits;   // num_anchors x num_scores
    std::vector<T> offsets;  // num_anchors x 4

    DetectionOutput() = default;
    DetectionOutput(int anchors, int scores)
        : num_anchors(anchors), num_scores(scores), logits(static_cast<std::size_t>(anchors) * scores, T(0)),
          offsets(static_cast<std::size_t>(anchors) * 4, T(0)) {}

    T logit(int a, int k) const { return logits[static_cast<std::size_t>(a) * num_scores + k]; }
    T offset(int a, int k) const { return offsets[static_cast<std::size_t>(a) * 4 + k]; }

    /// Flattened logits followed by offsets (the discriminator input).
    std::size_t flat_size() const noexcept { return logits.size() + offsets.size(); }
    T flat(std::size_t i) const { return i < logits.size() ? logits[i] : offsets[i - logits.size()]; }

    bool all_finite() const {
        for (T v : logits)
            if (!std::isfinite(static_cast<double>(v))) return false;
        for (T v : offsets)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

/// Layer names in ordinal order; freezing keys off these.
inline const std::vector<std::string>& layer_names() {
    static const std::vector<std::string> names{"block1", "block2", "block3", "block4", "head"};
    return names;
}

inline int layer_ordinal(const std::string& layer) {
    const auto& names = layer_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == layer) return static_cast<int>(i) + 1;
    throw ConfigError("unknown layer name '" + layer + "' (expected block1..block4 or head)");
}

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using CMatMap = Eigen::Map<const RowMat<T>>;

/// 3x3, padding 1, stride 1. cols is (c*9) x (h*w).
template <class T>
void im2col3(const std::vector<T>& x, int c, int h, int w, std::vector<T>& cols) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    cols.assign(static_cast<std::size_t>(c) * 9 * hw, T(0));
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                T* dst = &cols[(static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw];
                const T* src = &x[static_cast<std::size_t>(ci) * hw];
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    const int xlo = std::max(0, 1 - kx), xhi = std::min(w, w + 1 - kx);
                    for (int xx = xlo; xx < xhi; ++xx) dst[static_cast<std::size_t>(y) * w + xx] = src[static_cast<std::size_t>(sy) * w + xx + kx - 1];
                }
            }
}

template <class T>
void col2im3(const std::vector<T>& cols, int c, int h, int w, std::vector<T>& dx) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    dx.assign(static_cast<std::size_t>(c) * hw, T(0));
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                const T* src = &cols[(static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw];
                T* dst = &dx[static_cast<std::size_t>(ci) * hw];
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    const int xlo = std::max(0, 1 - kx), xhi = std::min(w, w + 1 - kx);
                    for (int xx = xlo; xx < xhi; ++xx) dst[static_cast<std::size_t>(sy) * w + xx + kx - 1] += src[static_cast<std::size_t>(y) * w + xx];
                }
            }
}

/// out (cout x hw) = W (cout x cin*9) * cols + b
template <class T>
void conv_forward(const Tensor<T>& weight, const Tensor<T>& bias, const std::vector<T>& cols, std::size_t hw, std::vector<T>& out) {
    const int cout = weight.shape[0];
    const int k = weight.shape[1] * 9;
    out.resize(static_cast<std::size_t>(cout) * hw);
    MatMap<T> o(out.data(), cout, static_cast<Eigen::Index>(hw));
    CMatMap<T> wm(weight.data.data(), cout, k);
    CMatMap<T> cm(cols.data(), k, static_cast<Eigen::Index>(hw));
    o.noalias() = wm * cm;
    for (int r = 0; r < cout; ++r) o.row(r).array() += bias.data[r];
}

/// Accumulates dW, db and (optionally) dcols for a conv layer.
template <class T>
void conv_backward(const Tensor<T>& weight, const std::vector<T>& cols, const std::vector<T>& dout, std::size_t hw,
                   Tensor<T>& dweight, Tensor<T>& dbias, std::vector<T>* dcols) {
    const int cout = weight.shape[0];
    const int k = weight.shape[1] * 9;
    CMatMap<T> dm(dout.data(), cout, static_cast<Eigen::Index>(hw));
    CMatMap<T> cm(cols.data(), k, static_cast<Eigen::Index>(hw));
    MatMap<T> dw(dweight.data.data(), cout, k);
    dw.noalias() += dm * cm.transpose();
    for (int r = 0; r < cout; ++r) {
        // fixed summation order; Eigen's vectorized sum depends on the buffer's alignment
        const T* row = dout.data() + static_cast<std::size_t>(r) * hw;
        T s = 0;
        for (std::size_t i = 0; i < hw; ++i) s += row[i];
        dbias.data[r] += s;
    }
    if (dcols) {
        dcols->resize(static_cast<std::size_t>(k) * hw);
        MatMap<T> dc(dcols->data(), k, static_cast<Eigen::Index>(hw));
        CMatMap<T> wm(weight.data.data(), cout, k);
        dc.noalias() = wm.transpose() * dm;
    }
}

template <class T>
T activate(Activation a, T z) {
    if (z > T(0)) return z;
    return a == Activation::relu ? T(0) : T(0.1) * z;
}

template <class T>
T activate_grad(Activation a, T z) {
    if (z > T(0)) return T(1);
    return a == Activation::relu ? T(0) : T(0.1);
}

} // namespace detail

/// Parameters of the detector plus its architecture description.
template <class T>
struct Detector {
    DetectorConfig config;
    ParamSet<T> params;

    // tensor indices
    static constexpr std::size_t kBlockW(int b) { return static_cast<std::size_t>(2 * b); }
    static constexpr std::size_t kBlockB(int b) { return static_cast<std::size_t>(2 * b + 1); }
    static constexpr std::size_t kClsW(int s) { return static_cast<std::size_t>(8 + 4 * s); }
    static constexpr std::size_t kClsB(int s) { return static_cast<std::size_t>(9 + 4 * s); }
    static constexpr std::size_t kBoxW(int s) { return static_cast<std::size_t>(10 + 4 * s); }
    static constexpr std::size_t kBoxB(int s) { return static_cast<std::size_t>(11 + 4 * s); }

    /// Fresh parameters: He-normal conv weights from `config.init_seed`, zero biases.
    static Detector create(const DetectorConfig& cfg) {
        cfg.validate();
        Detector d;
        d.config = cfg;
        d.params = make_layout(cfg);
        Rng rng = make_rng(cfg.init_seed, {0x1417});
        for (auto& t : d.params.tensors) {
            if (t.shape.size() != 4) continue;
            const double fan_in = static_cast<double>(t.shape[1]) * 9.0;
            const double std = std::sqrt(2.0 / fan_in);
            for (auto& v : t.data) v = static_cast<T>(std * standard_normal(rng));
        }
        return d;
    }

    /// Named, zero-filled tensors for an architecture.
    static ParamSet<T> make_layout(const DetectorConfig& cfg) {
        ParamSet<T> p;
        auto add = [&](std::string name, std::vector<int> shape, int ordinal) {
            p.tensors.push_back({std::move(name), shape, std::vector<T>(Tensor<T>::count(shape), T(0)), ordinal});
        };
        int cin = cfg.in_channels;
        for (int b = 0; b < 4; ++b) {
            const std::string n = "block" + std::to_string(b + 1);
            add(n + ".weight", {cfg.widths[b], cin, 3, 3}, b + 1);
            add(n + ".bias", {cfg.widths[b]}, b + 1);
            cin = cfg.widths[b];
        }
        const int na = cfg.anchors_per_cell();
        for (int s = 0; s < 2; ++s) {
            const int c = cfg.widths[2 + s];
            const std::string si = std::to_string(s);
            add("head.cls" + si + ".weight", {na * cfg.num_scores(), c, 3, 3}, 5);
            add("head.cls" + si + ".bias", {na * cfg.num_scores()}, 5);
            add("head.box" + si + ".weight", {na * 4, c, 3, 3}, 5);
            add("head.box" + si + ".bias", {na * 4}, 5);
        }
        return p;
    }

    int num_anchors() const { return config.num_anchors(); }

    /// Intermediate state retained for the backward pass.
    struct Cache {
        struct Block {
            int cin = 0, h = 0, w = 0;
            std::vector<T> cols, preact;
            std::vector<int> argmax;  // pooled position -> flat index into preact
            std::vector<T> pooled;
        };
        std::array<Block, 4> blocks;
        std::array<std::vector<T>, 2> head_cols;
    };

    DetectionOutput<T> forward(const Image& image, Cache* cache = nullptr) const {
        if (image.height != config.image_size || image.width != config.image_size || image.channels != config.in_channels)
            throw ShapeError("detector expects " + std::to_string(config.image_size) + "x" + std::to_string(config.image_size) +
                             "x" + std::to_string(config.in_channels) + " input, got " + std::to_string(image.height) + "x" +
                             std::to_string(image.width) + "x" + std::to_string(image.channels));
        Cache local;
        Cache& c = cache ? *cache : local;

        int h = config.image_size, w = config.image_size, cin = config.in_channels;
        std::vector<T> x(static_cast<std::size_t>(cin) * h * w);
        for (int ch = 0; ch < cin; ++ch)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    x[(static_cast<std::size_t>(ch) * h + y) * w + xx] = static_cast<T>(image.at(y, xx, ch));

        for (int b = 0; b < 4; ++b) {
            auto& blk = c.blocks[b];
            blk.cin = cin;
            blk.h = h;
            blk.w = w;
            const std::size_t hw = static_cast<std::size_t>(h) * w;
            detail::im2col3(x, cin, h, w, blk.cols);
            detail::conv_forward(params[kBlockW(b)], params[kBlockB(b)], blk.cols, hw, blk.preact);
            const int cout = config.widths[b];
            const int ph = h / 2, pw = w / 2;
            blk.pooled.assign(static_cast<std::size_t>(cout) * ph * pw, T(0));
            blk.argmax.assign(blk.pooled.size(), 0);
            for (int ch = 0; ch < cout; ++ch)
                for (int y = 0; y < ph; ++y)
                    for (int xx = 0; xx < pw; ++xx) {
                        int best = -1;
                        T bv{};
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const int idx = (ch * h + 2 * y + dy) * w + 2 * xx + dx;
                                const T v = detail::activate(config.activation, blk.preact[static_cast<std::size_t>(idx)]);
                                if (best < 0 || v > bv) {
                                    best = idx;
                                    bv = v;
                                }
                            }
                        const std::size_t o = (static_cast<std::size_t>(ch) * ph + y) * pw + xx;
                        blk.pooled[o] = bv;
                        blk.argmax[o] = best;
                    }
            x = blk.pooled;
            cin = cout;
            h = ph;
            w = pw;
        }

        DetectionOutput<T> out(num_anchors(), config.num_scores());
        const int na = config.anchors_per_cell(), ns = config.num_scores();
        int anchor_base = 0;
        for (int s = 0; s < 2; ++s) {
            const auto& feat = c.blocks[2 + s];
            const int g = feat.h / 2;
            const std::size_t hw = static_cast<std::size_t>(g) * g;
            detail::im2col3(feat.pooled, config.widths[2 + s], g, g, c.head_cols[s]);
            std::vector<T> cls, box;
            detail::conv_forward(params[kClsW(s)], params[kClsB(s)], c.head_cols[s], hw, cls);
            detail::conv_forward(params[kBoxW(s)], params[kBoxB(s)], c.head_cols[s], hw, box);
            for (std::size_t p = 0; p < hw; ++p)
                for (int a = 0; a < na; ++a) {
                    const std::size_t anchor = static_cast<std::size_t>(anchor_base) + p * na + a;
                    for (int k = 0; k < ns; ++k) out.logits[anchor * ns + k] = cls[(static_cast<std::size_t>(a) * ns + k) * hw + p];
                    for (int k = 0; k < 4; ++k) out.offsets[anchor * 4 + k] = box[(static_cast<std::size_t>(a) * 4 + k) * hw + p];
                }
            anchor_base += static_cast<int>(hw) * na;
        }
        return out;
    }

    /// Accumulates parameter gradients into `grads` given dLoss/dOutput for one image.
    void backward(const Cache& c, const DetectionOutput<T>& dout, ParamSet<T>& grads) const {
        const int na = config.anchors_per_cell(), ns = config.num_scores();
        std::array<std::vector<T>, 2> dfeat;
        int anchor_base = 0;
        for (int s = 0; s < 2; ++s) {
            const int g = c.blocks[2 + s].h / 2;
            const std::size_t hw = static_cast<std::size_t>(g) * g;
            std::vector<T> dcls(static_cast<std::size_t>(na) * ns * hw), dbox(static_cast<std::size_t>(na) * 4 * hw);
            for (std::size_t p = 0; p < hw; ++p)
                for (int a = 0; a < na; ++a) {
                    const std::size_t anchor = static_cast<std::size_t>(anchor_base) + p * na + a;
                    for (int k = 0; k < ns; ++k) dcls[(static_cast<std::size_t>(a) * ns + k) * hw + p] = dout.logits[anchor * ns + k];
                    for (int k = 0; k < 4; ++k) dbox[(static_cast<std::size_t>(a) * 4 + k) * hw + p] = dout.offsets[anchor * 4 + k];
                }
            anchor_base += static_cast<int>(hw) * na;
            std::vector<T> dcols_cls, dcols_box;
            detail::conv_backward(params[kClsW(s)], c.head_cols[s], dcls, hw, grads[kClsW(s)], grads[kClsB(s)], &dcols_cls);
            detail::conv_backward(params[kBoxW(s)], c.head_cols[s], dbox, hw, grads[kBoxW(s)], grads[kBoxB(s)], &dcols_box);
            for (std::size_t i = 0; i < dcols_cls.size(); ++i) dcols_cls[i] += dcols_box[i];
            detail::col2im3(dcols_cls, config.widths[2 + s], g, g, dfeat[s]);
        }

        // dfeat[1] flows back through block 4 into block 3's pooled output
        std::vector<T> dpooled = std::move(dfeat[1]);
        for (int b = 3; b >= 0; --b) {
            const auto& blk = c.blocks[b];
            const std::size_t hw = static_cast<std::size_t>(blk.h) * blk.w;
            std::vector<T> dpre(blk.preact.size(), T(0));
            for (std::size_t o = 0; o < blk.pooled.size(); ++o) {
                const std::size_t idx = static_cast<std::size_t>(blk.argmax[o]);
                dpre[idx] += dpooled[o] * detail::activate_grad(config.activation, blk.preact[idx]);
            }
            std::vector<T> dcols;
            detail::conv_backward(params[kBlockW(b)], blk.cols, dpre, hw, grads[kBlockW(b)], grads[kBlockB(b)],
                                  b > 0 ? &dcols : nullptr);
            if (b == 0) break;
            detail::col2im3(dcols, blk.cin, blk.h, blk.w, dpooled);
            if (b == 3) {
                for (std::size_t i = 0; i < dpooled.size(); ++i) dpooled[i] += dfeat[0][i];
            }
        }
    }
};

/// Tensors up to and including layer `k` are trainable; an empty name trains everything.
template <class T>
TrainMask freeze_after(const ParamSet<T>& params, const std::string& k) {
    TrainMask mask(params.size(), true);
    if (k.empty() || k == "all" || k == "all_layers") return mask;
    const int limit = layer_ordinal(k);
    for (std::size_t i = 0; i < params.size(); ++i) mask[i] = params[i].ordinal <= limit;
    return mask;
}

} // namespace gando::tinyssd
