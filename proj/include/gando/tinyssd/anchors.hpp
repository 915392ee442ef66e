#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "gando/core/box.hpp"
#include "gando/core/error.hpp"

namespace gando::tinyssd {

using AnchorSet = std::vector<Box>;

/// Anchors ordered grid-major, then row, column, aspect ratio. `scales` holds one
/// side length (normalized) per grid; ratio r gives w = s*sqrt(r), h = s/sqrt(r).
inline AnchorSet build_anchors(int image_size, const std::vector<int>& grid_sizes, const std::vector<double>& aspect_ratios,
                               const std::vector<double>& scales) {
    if (grid_sizes.empty() || aspect_ratios.empty()) throw ConfigError("anchor grids and aspect ratios must be non-empty");
    if (scales.size() != grid_sizes.size()) throw ConfigError("need exactly one anchor scale per grid");
    if (image_size <= 0) throw ConfigError("image size must be positive");
    AnchorSet anchors;
    for (std::size_t g = 0; g < grid_sizes.size(); ++g) {
        const int n = grid_sizes[g];
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                for (double r : aspect_ratios) {
                    const double s = scales[g], q = std::sqrt(r);
                    anchors.push_back({(x + 0.5) / n, (y + 0.5) / n, s * q, s / q});
                }
    }
    return anchors;
}

/// Center-offset / log-size encoding of `box` relative to `anchor`.
inline std::array<double, 4> encode_box(const Box& box, const Box& anchor) {
    return {(box.cx - anchor.cx) / anchor.w, (box.cy - anchor.cy) / anchor.h, std::log(box.w / anchor.w),
            std::log(box.h / anchor.h)};
}

inline Box decode_box(const std::array<double, 4>& t, const Box& anchor) {
    return {anchor.cx + t[0] * anchor.w, anchor.cy + t[1] * anchor.h, anchor.w * std::exp(t[2]), anchor.h * std::exp(t[3])};
}

/// Per-anchor training targets. label 0 is background, c+1 is class c.
struct EncodedTargets {
    std::vector<int> labels;
    std::vector<std::array<double, 4>> regression;  // meaningful only where mask is set
    std::vector<unsigned char> mask;
    std::vector<int> matched_gt;  // -1 for background

    int num_positive() const {
        int n = 0;
        for (unsigned char m : mask) n += m;
        return n;
    }
};

/// Each ground truth first claims its best anchor (greedy bipartite by highest IoU),
/// then every remaining anchor with IoU >= threshold joins its best ground truth.
inline EncodedTargets encode_targets(const std::vector<BoxLabel>& gt, const AnchorSet& anchors, double iou_threshold = 0.5) {
    const std::size_t na = anchors.size(), ng = gt.size();
    EncodedTargets t;
    t.labels.assign(na, 0);
    t.regression.assign(na, {0, 0, 0, 0});
    t.mask.assign(na, 0);
    t.matched_gt.assign(na, -1);
    if (ng == 0) return t;

    std::vector<double> ious(na * ng);
    for (std::size_t a = 0; a < na; ++a)
        for (std::size_t g = 0; g < ng; ++g) ious[a * ng + g] = iou(anchors[a], gt[g].box);

    for (std::size_t a = 0; a < na; ++a) {
        int best = -1;
        double best_iou = -1;
        for (std::size_t g = 0; g < ng; ++g)
            if (ious[a * ng + g] > best_iou) {
                best_iou = ious[a * ng + g];
                best = static_cast<int>(g);
            }
        if (best_iou >= iou_threshold) t.matched_gt[a] = best;
    }

    std::vector<unsigned char> gt_done(ng, 0), anchor_forced(na, 0);
    for (std::size_t round = 0; round < ng; ++round) {
        double best_iou = -1;
        std::size_t ba = 0, bg = 0;
        for (std::size_t g = 0; g < ng; ++g) {
            if (gt_done[g]) continue;
            for (std::size_t a = 0; a < na; ++a) {
                if (anchor_forced[a]) continue;
                if (ious[a * ng + g] > best_iou) {
                    best_iou = ious[a * ng + g];
                    ba = a;
                    bg = g;
                }
            }
        }
        gt_done[bg] = 1;
        anchor_forced[ba] = 1;
        t.matched_gt[ba] = static_cast<int>(bg);
    }

    for (std::size_t a = 0; a < na; ++a) {
        const int g = t.matched_gt[a];
        if (g < 0) continue;
        t.labels[a] = gt[static_cast<std::size_t>(g)].class_id + 1;
        t.mask[a] = 1;
        t.regression[a] = encode_box(gt[static_cast<std::size_t>(g)].box, anchors[a]);
    }
    return t;
}

} // namespace gando::tinyssd
