#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gando/core/rng.hpp"
#include "gando/degrade/pool.hpp"
#include "gando/evalkit/metrics.hpp"
#include "gando/synthkit/dataset.hpp"
#include "gando/tinyssd/decode.hpp"
#include "gando/tinyssd/detector.hpp"
#include "gando/tinyssd/loss.hpp"

namespace gando::evalkit {

using RecordList = std::vector<const synthkit::ManifestRecord*>;

/// Renders record `i` and, if a pool is given, degrades it with a level drawn from a
/// substream of (seed, record seed); the result depends on nothing else.
inline Sample evaluation_sample(const synthkit::ManifestRecord& rec, const degrade::DistortionPool* pool, std::uint64_t seed) {
    Sample s = synthkit::render_record(rec);
    if (pool) {
        Rng rng = make_rng(seed, {rec.seed, static_cast<std::uint64_t>(pool->family)});
        s.image = degrade::apply_random_level(s.image, *pool, rng);
    }
    return s;
}

struct EvalSet {
    std::vector<ImageDetections> dets;
    std::vector<ImageLabels> gts;
};

/// Runs the detector over every record (optionally degraded) and collects decoded detections.
template <class T>
EvalSet run_detector(const tinyssd::Detector<T>& det, const RecordList& records, const degrade::DistortionPool* pool,
                     std::uint64_t seed, const tinyssd::DecodeOptions& dopt = {}) {
    const tinyssd::AnchorSet anchors = det.config.anchors();
    EvalSet e;
    for (const auto* r : records) {
        const Sample s = evaluation_sample(*r, pool, seed);
        e.dets.push_back(tinyssd::decode_detections(det.forward(s.image), anchors, dopt));
        e.gts.push_back(s.labels);
    }
    return e;
}

template <class T>
double map50(const tinyssd::Detector<T>& det, const RecordList& records, const degrade::DistortionPool* pool, std::uint64_t seed) {
    const EvalSet e = run_detector(det, records, pool, seed);
    return voc_ap(e.dets, e.gts, det.config.num_classes).map.value_or(0.0);
}

struct LossBreakdown {
    std::string family = "none";
    double mean_l_class = 0;  // per image: L_class / N, averaged over images
    double mean_l_bb = 0;     // per image: L_bb / N, averaged over images
    long images = 0;
};

/// Mean classification and box-regression loss components over a split, each image normalized
/// by its own positive + mined-negative count. Reduction runs in record order.
template <class T>
LossBreakdown loss_decomposition(const tinyssd::Detector<T>& det, const RecordList& records, const degrade::DistortionPool* pool,
                                 std::uint64_t seed, const tinyssd::LossOptions& opt = {}) {
    const tinyssd::AnchorSet anchors = det.config.anchors();
    LossBreakdown b;
    b.family = pool ? to_string(pool->family) : "none";
    double sc = 0, sb = 0;
    for (const auto* r : records) {
        const Sample s = evaluation_sample(*r, pool, seed);
        const auto tgt = tinyssd::encode_targets(s.labels, anchors);
        const tinyssd::LossValue v = tinyssd::detection_loss(det.forward(s.image), tgt, opt);
        const double n = static_cast<double>(std::max<long>(v.n(), 1));
        sc += v.l_class / n;
        sb += v.l_bb / n;
        ++b.images;
    }
    if (b.images) {
        b.mean_l_class = sc / static_cast<double>(b.images);
        b.mean_l_bb = sb / static_cast<double>(b.images);
    }
    return b;
}

struct SweepPoint {
    int radius = 0;  // 0 = clean
    double map = 0;
};

/// mAP@0.5 at each fixed blur radius r in {0, 2, ..., 12}.
template <class T>
std::vector<SweepPoint> per_level_sweep(const tinyssd::Detector<T>& det, const RecordList& records, DistortionFamily family,
                                        std::uint64_t seed) {
    if (family != DistortionFamily::gaussian && family != DistortionFamily::defocus)
        throw ConfigError("per-level sweep supports gaussian and defocus blur only");
    std::vector<SweepPoint> out{{0, map50(det, records, nullptr, seed)}};
    for (int r : degrade::kBlurRadii) {
        const auto pool = degrade::make_pool(family, 0, {r});
        out.push_back({r, map50(det, records, &pool, seed)});
    }
    return out;
}

struct CrossMatrix {
    std::vector<std::string> models;    // row labels
    std::vector<std::string> families;  // column labels
    std::vector<std::vector<double>> map;
};

/// mAP of every model on every family's full pool (one random level per image).
template <class T>
CrossMatrix cross_distortion_matrix(const std::vector<std::pair<std::string, const tinyssd::Detector<T>*>>& models,
                                    const std::vector<DistortionFamily>& families, const RecordList& records,
                                    std::uint64_t seed, std::uint64_t pool_seed = 0) {
    CrossMatrix m;
    for (auto f : families) m.families.push_back(to_string(f));
    for (const auto& [name, det] : models) {
        m.models.push_back(name);
        std::vector<double> row;
        for (auto f : families) {
            const auto pool = degrade::make_pool(f, pool_seed);
            row.push_back(map50(*det, records, &pool, seed));
        }
        m.map.push_back(std::move(row));
    }
    return m;
}

} // namespace gando::evalkit
