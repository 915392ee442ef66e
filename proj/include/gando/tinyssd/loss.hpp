#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "gando/tinyssd/anchors.hpp"
#include "gando/tinyssd/detector.hpp"

namespace gando::tinyssd {

inline double smooth_l1(double d) {
    const double a = std::abs(d);
    return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

inline double smooth_l1_grad(double d) {
    if (d >= 1.0) return 1.0;
    if (d <= -1.0) return -1.0;
    return d;
}

struct LossOptions {
    double alpha = 1.0;
    int neg_pos_ratio = 3;
    /// Floor on the per-image positive count used to size negative mining for images without ground truth.
    int empty_image_min_positives = 4;
};

/// Components of the detection loss. l_class and l_bb are sums; l_od = (l_class + alpha*l_bb) / n.
struct LossValue {
    double l_class = 0;
    double l_bb = 0;
    double l_od = 0;
    long num_positive = 0;
    long num_negative = 0;

    long n() const noexcept { return num_positive + num_negative; }
};

namespace detail {

template <class T>
void log_softmax_row(const T* logits, int k, std::vector<double>& out) {
    out.resize(static_cast<std::size_t>(k));
    double m = static_cast<double>(logits[0]);
    for (int i = 1; i < k; ++i) m = std::max(m, static_cast<double>(logits[i]));
    double s = 0;
    for (int i = 0; i < k; ++i) s += std::exp(static_cast<double>(logits[i]) - m);
    const double lse = m + std::log(s);
    for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(logits[i]) - lse;
}

} // namespace detail

/// Hard-negative indices for one image: highest background loss first, ties by anchor index.
template <class T>
std::vector<int> mine_hard_negatives(const DetectionOutput<T>& out, const EncodedTargets& tgt, long count) {
    std::vector<std::pair<double, int>> negs;
    std::vector<double> ls;
    for (int a = 0; a < out.num_anchors; ++a) {
        if (tgt.mask[static_cast<std::size_t>(a)]) continue;
        detail::log_softmax_row(&out.logits[static_cast<std::size_t>(a) * out.num_scores], out.num_scores, ls);
        negs.emplace_back(-ls[0], a);
    }
    const std::size_t k = static_cast<std::size_t>(std::clamp<long>(count, 0, static_cast<long>(negs.size())));
    std::partial_sort(negs.begin(), negs.begin() + static_cast<std::ptrdiff_t>(k), negs.end(), [](const auto& x, const auto& y) {
        return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    std::vector<int> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = negs[i].second;
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// Batch detection loss with per-image hard-negative mining. When `grads` is non-null it
/// receives dL_od/d(output) for each image.
template <class T>
LossValue detection_loss(std::span<const DetectionOutput<T>> outputs, std::span<const EncodedTargets> targets,
                         const LossOptions& opt = {}, std::vector<DetectionOutput<T>>* grads = nullptr) {
    if (outputs.size() != targets.size()) throw ShapeError("detection_loss: outputs and targets differ in batch size");
    LossValue v;
    long total_pos = 0;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        if (targets[i].mask.size() != static_cast<std::size_t>(outputs[i].num_anchors))
            throw ShapeError("detection_loss: target anchor count does not match output");
        total_pos += targets[i].num_positive();
    }
    const double mean_pos = outputs.empty() ? 0.0 : static_cast<double>(total_pos) / static_cast<double>(outputs.size());
    const long empty_count =
        opt.neg_pos_ratio * std::max<long>(static_cast<long>(std::ceil(mean_pos)), opt.empty_image_min_positives);

    struct Selected {
        std::vector<int> negatives;
    };
    std::vector<Selected> sel(outputs.size());
    std::vector<double> ls;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        const auto& out = outputs[i];
        const auto& tgt = targets[i];
        const long npos = tgt.num_positive();
        const long want = npos > 0 ? opt.neg_pos_ratio * npos : empty_count;
        sel[i].negatives = mine_hard_negatives(out, tgt, want);
        v.num_positive += npos;
        v.num_negative += static_cast<long>(sel[i].negatives.size());
        for (int a = 0; a < out.num_anchors; ++a) {
            if (!tgt.mask[static_cast<std::size_t>(a)]) continue;
            detail::log_softmax_row(&out.logits[static_cast<std::size_t>(a) * out.num_scores], out.num_scores, ls);
            v.l_class -= ls[static_cast<std::size_t>(tgt.labels[static_cast<std::size_t>(a)])];
            for (int k = 0; k < 4; ++k)
                v.l_bb += smooth_l1(static_cast<double>(out.offset(a, k)) - tgt.regression[static_cast<std::size_t>(a)][k]);
        }
        for (int a : sel[i].negatives) {
            detail::log_softmax_row(&out.logits[static_cast<std::size_t>(a) * out.num_scores], out.num_scores, ls);
            v.l_class -= ls[0];
        }
    }
    const long n = v.n();
    v.l_od = n > 0 ? (v.l_class + opt.alpha * v.l_bb) / static_cast<double>(n) : 0.0;

    if (grads) {
        grads->clear();
        const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
        for (std::size_t i = 0; i < outputs.size(); ++i) {
            const auto& out = outputs[i];
            const auto& tgt = targets[i];
            DetectionOutput<T> g(out.num_anchors, out.num_scores);
            auto class_grad = [&](int a, int label) {
                detail::log_softmax_row(&out.logits[static_cast<std::size_t>(a) * out.num_scores], out.num_scores, ls);
                for (int k = 0; k < out.num_scores; ++k) {
                    const double p = std::exp(ls[static_cast<std::size_t>(k)]);
                    g.logits[static_cast<std::size_t>(a) * out.num_scores + k] = static_cast<T>((p - (k == label ? 1.0 : 0.0)) * inv_n);
                }
            };
            for (int a = 0; a < out.num_anchors; ++a) {
                if (!tgt.mask[static_cast<std::size_t>(a)]) continue;
                class_grad(a, tgt.labels[static_cast<std::size_t>(a)]);
                for (int k = 0; k < 4; ++k) {
                    const double d = static_cast<double>(out.offset(a, k)) - tgt.regression[static_cast<std::size_t>(a)][k];
                    g.offsets[static_cast<std::size_t>(a) * 4 + k] = static_cast<T>(opt.alpha * smooth_l1_grad(d) * inv_n);
                }
            }
            for (int a : sel[i].negatives) class_grad(a, 0);
            grads->push_back(std::move(g));
        }
    }
    return v;
}

template <class T>
LossValue detection_loss(const DetectionOutput<T>& output, const EncodedTargets& targets, const LossOptions& opt = {}) {
    return detection_loss<T>(std::span<const DetectionOutput<T>>(&output, 1), std::span<const EncodedTargets>(&targets, 1), opt);
}

} // namespace gando::tinyssd
