#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gando/core/box.hpp"

namespace gando::evalkit {

using gando::iou;

/// Per-image detections and ground truth; the image key is the position in the span.
using ImageDetections = std::vector<Detection>;
using ImageLabels = std::vector<BoxLabel>;

/// Half-open pixel-area interval [lo, hi) for COCO-style size bins.
struct AreaRange {
    double lo = 0;
    double hi = 1e300;
    double image_size = 1;  // converts normalized areas to pixels

    bool contains(const Box& b) const {
        const double a = b.area() * image_size * image_size;
        return a >= lo && a < hi;
    }
};

/// Ranked match outcome for one class: true positives in score order and the positive count.
struct RankedMatches {
    std::vector<bool> tp;  // one entry per counted detection, in rank order
    long num_gt = 0;
};

/// Detections of class `cls` ranked by score (ties: image key, then detection index), each matched
/// greedily to the unmatched same-class ground truth with the highest IoU >= threshold (ties: gt index).
/// With an area range, out-of-range ground truth is ignored, detections matched to it are dropped and
/// unmatched out-of-range detections are dropped.
inline RankedMatches match_class(std::span<const ImageDetections> dets, std::span<const ImageLabels> gts, int cls,
                                 double iou_threshold, const std::optional<AreaRange>& area = std::nullopt) {
    struct Ref {
        double score;
        std::size_t image, index;
    };
    std::vector<Ref> order;
    for (std::size_t i = 0; i < dets.size(); ++i)
        for (std::size_t k = 0; k < dets[i].size(); ++k)
            if (dets[i][k].class_id == cls) order.push_back({dets[i][k].score, i, k});
    std::stable_sort(order.begin(), order.end(), [](const Ref& a, const Ref& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.image != b.image) return a.image < b.image;
        return a.index < b.index;
    });

    RankedMatches out;
    std::vector<std::vector<bool>> used(gts.size());
    std::vector<std::vector<bool>> ignored(gts.size());
    for (std::size_t i = 0; i < gts.size(); ++i) {
        used[i].assign(gts[i].size(), false);
        ignored[i].assign(gts[i].size(), false);
        for (std::size_t g = 0; g < gts[i].size(); ++g) {
            if (gts[i][g].class_id != cls) continue;
            ignored[i][g] = area && !area->contains(gts[i][g].box);
            if (!ignored[i][g]) ++out.num_gt;
        }
    }

    for (const Ref& r : order) {
        const Detection& d = dets[r.image][r.index];
        int best = -1;
        double best_iou = -1;
        bool best_ignored = true;
        if (r.image < gts.size()) {
            for (std::size_t g = 0; g < gts[r.image].size(); ++g) {
                const auto& gt = gts[r.image][g];
                if (gt.class_id != cls || used[r.image][g]) continue;
                const double v = iou(d.box, gt.box);
                if (v < iou_threshold) continue;
                const bool ign = ignored[r.image][g];
                // prefer counted ground truth over ignored, then higher IoU, then lower index
                if (best < 0 || (best_ignored && !ign) || (best_ignored == ign && v > best_iou)) {
                    best = static_cast<int>(g);
                    best_iou = v;
                    best_ignored = ign;
                }
            }
        }
        if (best >= 0) {
            used[r.image][static_cast<std::size_t>(best)] = true;
            if (!best_ignored) out.tp.push_back(true);
            continue;
        }
        if (area && !area->contains(d.box)) continue;
        out.tp.push_back(false);
    }
    return out;
}

/// All-point interpolated AP (area under the monotone precision envelope). Undefined without ground truth.
inline std::optional<double> average_precision(const RankedMatches& m) {
    if (m.num_gt == 0) return std::nullopt;
    const std::size_t n = m.tp.size();
    std::vector<double> rec(n), prec(n);
    long tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        tp += m.tp[i] ? 1 : 0;
        rec[i] = static_cast<double>(tp) / static_cast<double>(m.num_gt);
        prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    }
    for (std::size_t i = n; i-- > 1;) prec[i - 1] = std::max(prec[i - 1], prec[i]);
    double ap = 0, prev_r = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (rec[i] > prev_r) {
            ap += (rec[i] - prev_r) * prec[i];
            prev_r = rec[i];
        }
    }
    return std::clamp(ap, 0.0, 1.0);
}

struct ClassAP {
    int class_id = 0;
    std::optional<double> ap;  // undefined for classes without ground truth
    long num_gt = 0;
    long num_det = 0;
};

struct VocResult {
    std::vector<ClassAP> per_class;
    std::optional<double> map;  // mean over classes with >= 1 ground truth
};

inline VocResult voc_ap(std::span<const ImageDetections> dets, std::span<const ImageLabels> gts, int num_classes,
                        double iou_threshold = 0.5, const std::optional<AreaRange>& area = std::nullopt) {
    VocResult r;
    double sum = 0;
    int defined = 0;
    for (int c = 0; c < num_classes; ++c) {
        const RankedMatches m = match_class(dets, gts, c, iou_threshold, area);
        ClassAP ca;
        ca.class_id = c;
        ca.num_gt = m.num_gt;
        ca.num_det = static_cast<long>(m.tp.size());
        ca.ap = average_precision(m);
        if (ca.ap) {
            sum += *ca.ap;
            ++defined;
        }
        r.per_class.push_back(ca);
    }
    if (defined) r.map = sum / defined;
    return r;
}

/// COCO's 32^2 / 96^2 pixel-area edges rescaled by (image_size / 640)^2.
struct AreaBins {
    double small_max = 0;
    double medium_max = 0;

    static AreaBins scaled_coco(int image_size) {
        const double s = static_cast<double>(image_size) / 640.0;
        return {32.0 * 32.0 * s * s, 96.0 * 96.0 * s * s};
    }
};

inline constexpr int kCocoThresholds = 10;
/// 0.50, 0.55, ..., 0.95 built from integers so each value is the nearest double.
inline double coco_threshold(int i) { return static_cast<double>(50 + 5 * i) / 100.0; }

struct APReport {
    std::vector<ClassAP> per_class;  // at IoU 0.5
    std::optional<double> map50;
    std::optional<double> map75;
    std::optional<double> map_avg;  // mean over the ten thresholds
    std::array<std::optional<double>, kCocoThresholds> map_at{};
    std::optional<double> ap_small, ap_medium, ap_large;
    long num_gt = 0;
    long num_det = 0;
    std::string interpolation = "all-point";
};

namespace detail {

inline std::optional<double> mean_defined(const std::vector<std::optional<double>>& xs) {
    double s = 0;
    int n = 0;
    for (const auto& x : xs)
        if (x) {
            s += *x;
            ++n;
        }
    if (!n) return std::nullopt;
    return s / n;
}

inline std::optional<double> averaged_over_thresholds(std::span<const ImageDetections> dets, std::span<const ImageLabels> gts,
                                                      int num_classes, const std::optional<AreaRange>& area) {
    std::vector<std::optional<double>> per;
    for (int t = 0; t < kCocoThresholds; ++t) per.push_back(voc_ap(dets, gts, num_classes, coco_threshold(t), area).map);
    return mean_defined(per);
}

} // namespace detail

inline APReport coco_ap(std::span<const ImageDetections> dets, std::span<const ImageLabels> gts, int num_classes,
                        int image_size, const AreaBins& bins) {
    APReport r;
    std::vector<std::optional<double>> per;
    for (int t = 0; t < kCocoThresholds; ++t) {
        const VocResult v = voc_ap(dets, gts, num_classes, coco_threshold(t));
        if (t == 0) r.per_class = v.per_class;
        r.map_at[static_cast<std::size_t>(t)] = v.map;
        per.push_back(v.map);
    }
    r.map50 = r.map_at[0];
    r.map75 = r.map_at[5];
    r.map_avg = detail::mean_defined(per);
    const double s = image_size;
    r.ap_small = detail::averaged_over_thresholds(dets, gts, num_classes, AreaRange{0, bins.small_max, s});
    r.ap_medium = detail::averaged_over_thresholds(dets, gts, num_classes, AreaRange{bins.small_max, bins.medium_max, s});
    r.ap_large = detail::averaged_over_thresholds(dets, gts, num_classes, AreaRange{bins.medium_max, 1e300, s});
    for (const auto& g : gts) r.num_gt += static_cast<long>(g.size());
    for (const auto& d : dets) r.num_det += static_cast<long>(d.size());
    return r;
}

} // namespace gando::evalkit
