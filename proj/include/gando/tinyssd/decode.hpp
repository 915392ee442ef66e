#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "gando/core/box.hpp"
#include "gando/tinyssd/anchors.hpp"
#include "gando/tinyssd/detector.hpp"

namespace gando::tinyssd {

/// NMS candidate; `key` is the tie-breaker for equal scores (lower first).
struct Candidate {
    double score = 0;
    int key = 0;
    Box box;
};

/// Greedy NMS: descending score (ties by key), drop anything overlapping a kept box above `iou_threshold`.
inline std::vector<Candidate> nms(std::vector<Candidate> cands, double iou_threshold) {
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        return a.score != b.score ? a.score > b.score : a.key < b.key;
    });
    std::vector<Candidate> kept;
    for (const auto& c : cands) {
        bool suppressed = false;
        for (const auto& k : kept)
            if (iou(k.box, c.box) > iou_threshold) {
                suppressed = true;
                break;
            }
        if (!suppressed) kept.push_back(c);
    }
    return kept;
}

struct DecodeOptions {
    double conf_threshold = 0.05;
    double nms_iou = 0.45;
    int max_dets = 100;
};

/// Softmax scores per class, offsets decoded against anchors and clipped, per-class NMS,
/// then the global top `max_dets` by score (ties: class, then anchor index).
template <class T>
std::vector<Detection> decode_detections(const DetectionOutput<T>& out, const AnchorSet& anchors, const DecodeOptions& opt = {}) {
    if (anchors.size() != static_cast<std::size_t>(out.num_anchors)) throw ShapeError("decode: anchor count mismatch");
    const int ns = out.num_scores;
    std::vector<double> probs(static_cast<std::size_t>(out.num_anchors) * ns);
    for (int a = 0; a < out.num_anchors; ++a) {
        double m = static_cast<double>(out.logit(a, 0));
        for (int k = 1; k < ns; ++k) m = std::max(m, static_cast<double>(out.logit(a, k)));
        double s = 0;
        for (int k = 0; k < ns; ++k) s += std::exp(static_cast<double>(out.logit(a, k)) - m);
        for (int k = 0; k < ns; ++k)
            probs[static_cast<std::size_t>(a) * ns + k] = std::exp(static_cast<double>(out.logit(a, k)) - m) / s;
    }

    struct Ranked {
        Detection det;
        int anchor;
    };
    std::vector<Ranked> all;
    for (int c = 1; c < ns; ++c) {
        std::vector<Candidate> cands;
        for (int a = 0; a < out.num_anchors; ++a) {
            const double p = probs[static_cast<std::size_t>(a) * ns + c];
            if (p < opt.conf_threshold) continue;
            std::array<double, 4> t{};
            for (int k = 0; k < 4; ++k) t[static_cast<std::size_t>(k)] = static_cast<double>(out.offset(a, k));
            // cap log-size offsets so exp() stays finite on untrained models
            t[2] = std::min(t[2], 8.0);
            t[3] = std::min(t[3], 8.0);
            cands.push_back({p, a, clip_unit(decode_box(t, anchors[static_cast<std::size_t>(a)]))});
        }
        for (const auto& k : nms(std::move(cands), opt.nms_iou))
            all.push_back({Detection{c - 1, std::clamp(k.score, 0.0, 1.0), k.box}, k.key});
    }
    std::sort(all.begin(), all.end(), [](const Ranked& a, const Ranked& b) {
        if (a.det.score != b.det.score) return a.det.score > b.det.score;
        if (a.det.class_id != b.det.class_id) return a.det.class_id < b.det.class_id;
        return a.anchor < b.anchor;
    });
    if (all.size() > static_cast<std::size_t>(opt.max_dets)) all.resize(static_cast<std::size_t>(opt.max_dets));
    std::vector<Detection> dets;
    dets.reserve(all.size());
    for (auto& r : all) dets.push_back(r.det);
    return dets;
}

} // namespace gando::tinyssd
