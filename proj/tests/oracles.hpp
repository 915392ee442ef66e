#pragma once
// Brute-force references the library is checked against.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "gando/core/box.hpp"
#include "gando/core/image.hpp"
#include "gando/core/rng.hpp"
#include "gando/degrade/kernel.hpp"
#include "gando/evalkit/metrics.hpp"
#include "gando/tinyssd/decode.hpp"
#include "gando/tinyssd/detector.hpp"

namespace oracle {

using namespace gando;

/// Direct four-loop convolution with edge-replicate padding.
inline Image convolve(const Image& in, const degrade::Kernel& k) {
    Image out(in.height, in.width, in.channels);
    const int r = k.side / 2;
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x)
            for (int c = 0; c < in.channels; ++c) {
                double acc = 0;
                for (int dv = -r; dv <= r; ++dv)
                    for (int du = -r; du <= r; ++du) {
                        const int sy = std::clamp(y - dv, 0, in.height - 1);
                        const int sx = std::clamp(x - du, 0, in.width - 1);
                        acc += k.taps[static_cast<std::size_t>((dv + r) * k.side + (du + r))] * in.at(sy, sx, c);
                    }
                out.at(y, x, c) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
            }
    return out;
}

/// O(n^2) NMS: repeatedly take the best remaining candidate and drop everything it overlaps.
inline std::vector<tinyssd::Candidate> nms(std::vector<tinyssd::Candidate> pool, double thr) {
    std::vector<tinyssd::Candidate> kept;
    while (!pool.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < pool.size(); ++i)
            if (pool[i].score > pool[best].score || (pool[i].score == pool[best].score && pool[i].key < pool[best].key)) best = i;
        const auto b = pool[best];
        kept.push_back(b);
        std::vector<tinyssd::Candidate> rest;
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (i != best && iou(pool[i].box, b.box) <= thr) rest.push_back(pool[i]);
        pool = std::move(rest);
    }
    return kept;
}

/// AP by explicit threshold enumeration: for every distinct score s, keep detections with
/// score >= s, match them greedily, and record (recall, precision). AP integrates the
/// monotone envelope of those points over recall.
inline std::optional<double> voc_ap_by_thresholds(const std::vector<evalkit::ImageDetections>& dets,
                                                  const std::vector<evalkit::ImageLabels>& gts, int cls, double thr) {
    long npos = 0;
    for (const auto& g : gts)
        for (const auto& l : g)
            if (l.class_id == cls) ++npos;
    if (npos == 0) return std::nullopt;

    struct D {
        double score;
        std::size_t img, idx;
        Box box;
    };
    std::vector<D> all;
    for (std::size_t i = 0; i < dets.size(); ++i)
        for (std::size_t j = 0; j < dets[i].size(); ++j)
            if (dets[i][j].class_id == cls) all.push_back({dets[i][j].score, i, j, dets[i][j].box});
    std::sort(all.begin(), all.end(), [](const D& a, const D& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.img != b.img) return a.img < b.img;
        return a.idx < b.idx;
    });

    // Threshold at each distinct score: everything scoring at least that much is admitted.
    std::vector<std::pair<double, double>> pr;  // (recall, precision)
    for (std::size_t k = 1; k <= all.size(); ++k) {
        if (k < all.size() && all[k].score == all[k - 1].score) continue;  // threshold admits the whole tie group
        std::vector<std::vector<bool>> used(gts.size());
        for (std::size_t i = 0; i < gts.size(); ++i) used[i].assign(gts[i].size(), false);
        long tp = 0;
        for (std::size_t d = 0; d < k; ++d) {
            const auto& g = gts[all[d].img];
            int best = -1;
            double best_iou = -1;
            for (std::size_t j = 0; j < g.size(); ++j) {
                if (g[j].class_id != cls || used[all[d].img][j]) continue;
                const double o = iou(all[d].box, g[j].box);
                if (o >= thr && o > best_iou) {
                    best_iou = o;
                    best = static_cast<int>(j);
                }
            }
            if (best >= 0) {
                used[all[d].img][static_cast<std::size_t>(best)] = true;
                ++tp;
            }
        }
        pr.emplace_back(static_cast<double>(tp) / npos, static_cast<double>(tp) / static_cast<double>(k));
    }
    // Area under the envelope: for each recall step, the best precision at any recall >= it.
    double ap = 0, prev_r = 0;
    for (std::size_t k = 0; k < pr.size(); ++k) {
        if (pr[k].first <= prev_r) continue;
        double p = 0;
        for (std::size_t m = k; m < pr.size(); ++m) p = std::max(p, pr[m].second);
        ap += (pr[k].first - prev_r) * p;
        prev_r = pr[k].first;
    }
    return ap;
}

struct Instance {
    using ImageDetections = evalkit::ImageDetections;
    using ImageLabels = evalkit::ImageLabels;
    std::vector<ImageDetections> dets;
    std::vector<ImageLabels> gts;
};

/// Up to `max_dets` detections over a few images; boxes jittered around the ground truth so that
/// hits and misses both occur. `one_gt_per_class` keeps at most one object of each class per image.
inline Instance random_instance(std::uint64_t seed, int num_classes, int max_dets, bool one_gt_per_class = false) {
    Rng rng = make_rng(seed, {0xe7a1});
    Instance in;
    const int images = 1 + static_cast<int>(uniform_index(rng, 4));
    in.dets.resize(static_cast<std::size_t>(images));
    in.gts.resize(static_cast<std::size_t>(images));
    for (auto& g : in.gts) {
        const int n = static_cast<int>(uniform_index(rng, 4));
        for (int k = 0; k < n; ++k) {
            const int cls = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(num_classes)));
            if (one_gt_per_class && std::any_of(g.begin(), g.end(), [&](const BoxLabel& l) { return l.class_id == cls; })) continue;
            const double w = 0.1 + 0.3 * uniform01(rng), h = 0.1 + 0.3 * uniform01(rng);
            g.push_back({cls, Box{0.2 + 0.6 * uniform01(rng), 0.2 + 0.6 * uniform01(rng), w, h}});
        }
    }
    const int nd = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(max_dets) + 1));
    for (int k = 0; k < nd; ++k) {
        const std::size_t img = uniform_index(rng, static_cast<std::size_t>(images));
        Detection d;
        d.score = uniform01(rng);
        const auto& g = in.gts[img];
        if (!g.empty() && uniform01(rng) < 0.7) {
            const auto& t = g[uniform_index(rng, g.size())];
            d.class_id = uniform01(rng) < 0.85 ? t.class_id : static_cast<int>(uniform_index(rng, static_cast<std::size_t>(num_classes)));
            const double j = 0.15 * t.box.w;
            d.box = Box{t.box.cx + j * (2 * uniform01(rng) - 1), t.box.cy + j * (2 * uniform01(rng) - 1), t.box.w * (0.7 + 0.6 * uniform01(rng)),
                        t.box.h * (0.7 + 0.6 * uniform01(rng))};
        } else {
            d.class_id = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(num_classes)));
            d.box = Box{uniform01(rng), uniform01(rng), 0.05 + 0.3 * uniform01(rng), 0.05 + 0.3 * uniform01(rng)};
        }
        in.dets[img].push_back(d);
    }
    return in;
}


/// A detector small enough for finite differences: 16x16 input, widths 2, one aspect ratio.
inline tinyssd::DetectorConfig tiny_config(int num_classes = 1) {
    tinyssd::DetectorConfig c;
    c.image_size = 16;
    c.num_classes = num_classes;
    c.widths = {2, 2, 2, 2};
    c.aspect_ratios = {1.0};
    c.anchor_scales = {0.45, 0.8};
    c.init_seed = 11;
    return c;
}

inline Image random_image(int h, int w, int c, std::uint64_t seed) {
    Image img(h, w, c);
    Rng rng = make_rng(seed);
    for (auto& p : img.pixels) p = static_cast<float>(uniform01(rng));
    return img;
}

/// Distance of an input from the network's non-differentiable points: the smallest |pre-activation|
/// and the smallest gap between the two largest activations of any pooling window. Central
/// differences with step h are only meaningful when this stays well above h.
inline double kink_margin(const tinyssd::Detector<double>& det, const Image& image) {
    tinyssd::Detector<double>::Cache c;
    det.forward(image, &c);
    double m = std::numeric_limits<double>::infinity();
    for (int b = 0; b < 4; ++b) {
        const auto& blk = c.blocks[static_cast<std::size_t>(b)];
        for (double v : blk.preact) m = std::min(m, std::abs(v));
        const int cout = det.config.widths[static_cast<std::size_t>(b)];
        for (int ch = 0; ch < cout; ++ch)
            for (int y = 0; y + 1 < blk.h; y += 2)
                for (int x = 0; x + 1 < blk.w; x += 2) {
                    std::vector<double> win;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const double z = blk.preact[static_cast<std::size_t>((ch * blk.h + y + dy) * blk.w + x + dx)];
                            win.push_back(z > 0 ? z : 0.1 * z);
                        }
                    std::sort(win.begin(), win.end());
                    m = std::min(m, win[3] - win[2]);
                }
    }
    return m;
}

/// First images from consecutive seeds (starting at `seed`) whose kink margin exceeds `margin`.
inline std::vector<Image> smooth_images(const tinyssd::Detector<double>& det, int count, std::uint64_t seed, double margin) {
    std::vector<Image> out;
    const int side = det.config.image_size;
    for (std::uint64_t s = seed; static_cast<int>(out.size()) < count; ++s) {
        Image im = random_image(side, side, det.config.in_channels, s);
        if (kink_margin(det, im) > margin) out.push_back(std::move(im));
    }
    return out;
}

} // namespace oracle
