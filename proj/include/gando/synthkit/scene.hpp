#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gando/core/box.hpp"
#include "gando/core/error.hpp"
#include "gando/core/hash.hpp"
#include "gando/core/image.hpp"
#include "gando/core/rng.hpp"

namespace gando::synthkit {

enum class ShapeClass { circle, square, triangle };

inline std::string to_string(ShapeClass c) {
    switch (c) {
        case ShapeClass::circle: return "circle";
        case ShapeClass::square: return "square";
        case ShapeClass::triangle: return "triangle";
    }
    return "unknown";
}

inline ShapeClass parse_shape(const std::string& s) {
    if (s == "circle") return ShapeClass::circle;
    if (s == "square") return ShapeClass::square;
    if (s == "triangle") return ShapeClass::triangle;
    throw ConfigError("unknown shape class '" + s + "'");
}

/// Multi-octave value noise on top of a seeded base color.
struct TextureSpec {
    int octaves = 3;
    int cell_size = 24;       // lattice spacing of the coarsest octave, pixels
    double amplitude = 0.22;  // peak deviation of the coarsest octave
    double base_lo = 0.2;     // base color channels drawn from [base_lo, base_hi]
    double base_hi = 0.8;
};

struct SceneSpec {
    int image_size = 96;
    int num_objects = 1;
    std::vector<ShapeClass> class_set{ShapeClass::circle, ShapeClass::square, ShapeClass::triangle};
    TextureSpec background;
    int min_object_side = 12;
    int max_object_side = 48;

    int num_classes() const noexcept { return static_cast<int>(class_set.size()); }

    void validate() const {
        if (image_size < 8) throw ConfigError("scene image_size must be >= 8");
        if (num_objects < 1 || num_objects > 4) throw ConfigError("scene num_objects must be in [1,4]");
        if (class_set.empty() || class_set.size() > 5) throw ConfigError("scene class_set must hold 1..5 classes");
        if (min_object_side < 2 || min_object_side > max_object_side || max_object_side > image_size)
            throw ConfigError("scene object side bounds must satisfy 2 <= min <= max <= image_size");
        if (background.octaves < 1 || background.cell_size < 2)
            throw ConfigError("texture needs >= 1 octave and cell_size >= 2");
    }

    /// Canonical text form; also the hashing input.
    std::string canonical() const {
        std::string s = "image_size=" + std::to_string(image_size) + " num_objects=" + std::to_string(num_objects) +
                        " classes=";
        for (std::size_t i = 0; i < class_set.size(); ++i) {
            if (i) s += ',';
            s += to_string(class_set[i]);
        }
        s += " min_side=" + std::to_string(min_object_side) + " max_side=" + std::to_string(max_object_side);
        s += " octaves=" + std::to_string(background.octaves) + " cell=" + std::to_string(background.cell_size);
        s += " amplitude=" + exact_double(background.amplitude) + " base_lo=" + exact_double(background.base_lo) +
             " base_hi=" + exact_double(background.base_hi);
        return s;
    }

    std::uint64_t hash() const { return fnv1a(canonical()); }
};

namespace detail {

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

/// One octave of value noise for a single channel, in [-1, 1].
class ValueNoise {
public:
    ValueNoise(int image_size, int cell, Rng& rng) : cell_(cell), n_(image_size / cell + 2) {
        lattice_.resize(static_cast<std::size_t>(n_) * n_);
        for (auto& v : lattice_) v = uniform(rng, -1.0, 1.0);
    }

    double sample(double x, double y) const {
        const double gx = x / cell_, gy = y / cell_;
        const int ix = static_cast<int>(gx), iy = static_cast<int>(gy);
        const double tx = smoothstep(gx - ix), ty = smoothstep(gy - iy);
        const double a = at(ix, iy), b = at(ix + 1, iy), c = at(ix, iy + 1), d = at(ix + 1, iy + 1);
        return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
    }

private:
    double at(int x, int y) const { return lattice_[static_cast<std::size_t>(y) * n_ + x]; }

    int cell_;
    int n_;
    std::vector<double> lattice_;
};

inline bool inside_shape(ShapeClass cls, const Box& px, double x, double y) {
    switch (cls) {
        case ShapeClass::square:
            return x >= px.x0() && x <= px.x1() && y >= px.y0() && y <= px.y1();
        case ShapeClass::circle: {
            const double dx = (x - px.cx) / (px.w / 2), dy = (y - px.cy) / (px.h / 2);
            return dx * dx + dy * dy <= 1.0;
        }
        case ShapeClass::triangle: {
            // apex at top-center, base along the bottom edge
            if (y < px.y0() || y > px.y1()) return false;
            const double t = (y - px.y0()) / px.h;
            return std::abs(x - px.cx) <= t * px.w / 2;
        }
    }
    return false;
}

} // namespace detail

/// Renders one scene. Pure function of (spec, seed).
inline std::pair<Image, std::vector<BoxLabel>> render_scene(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int n = spec.image_size;
    Rng rng = make_rng(seed, {0x5ce4e});

    Image img(n, n, 3);
    std::array<double, 3> base{};
    for (auto& b : base) b = uniform(rng, spec.background.base_lo, spec.background.base_hi);

    std::array<double, 3> mean{};
    for (int ch = 0; ch < 3; ++ch) {
        std::vector<detail::ValueNoise> octaves;
        std::vector<double> amps;
        int cell = spec.background.cell_size;
        double amp = spec.background.amplitude;
        for (int o = 0; o < spec.background.octaves; ++o) {
            octaves.emplace_back(n, std::max(cell, 2), rng);
            amps.push_back(amp);
            cell /= 2;
            amp /= 2;
        }
        double sum = 0;
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                double v = base[ch];
                for (std::size_t o = 0; o < octaves.size(); ++o) v += amps[o] * octaves[o].sample(x + 0.5, y + 0.5);
                const float p = static_cast<float>(std::clamp(v, 0.0, 1.0));
                img.at(y, x, ch) = p;
                sum += p;
            }
        }
        mean[ch] = sum / (static_cast<double>(n) * n);
    }

    struct Placed {
        ShapeClass shape;
        int class_id;
        Box px;  // pixel units
        std::array<float, 3> color;
    };
    std::vector<Placed> placed;
    std::vector<BoxLabel> labels;

    const double lo = spec.min_object_side, hi = spec.max_object_side;
    for (int k = 0; k < spec.num_objects; ++k) {
        bool ok = false;
        for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
            const int cid = static_cast<int>(uniform_index(rng, spec.class_set.size()));
            const double side = uniform(rng, lo, hi);
            const double aspect = std::exp(uniform(rng, std::log(0.75), std::log(1.0 / 0.75)));
            const double w = std::clamp(side * std::sqrt(aspect), lo, hi);
            const double h = std::clamp(side / std::sqrt(aspect), lo, hi);
            // keep a sub-ulp margin so normalized corners never round past 1
            const double x0 = std::min(uniform(rng, 0.0, n - w), n - w - 1e-7);
            const double y0 = std::min(uniform(rng, 0.0, n - h), n - h - 1e-7);
            const Box px{x0 + w / 2, y0 + h / 2, w, h};
            bool clear = true;
            for (const auto& p : placed) {
                if (iou(p.px, px) >= 0.3) {
                    clear = false;
                    break;
                }
            }
            if (!clear) continue;

            std::array<float, 3> color{};
            for (int tries = 0;; ++tries) {
                double gap = 0;
                for (int ch = 0; ch < 3; ++ch) {
                    color[ch] = static_cast<float>(uniform01(rng));
                    gap = std::max(gap, std::abs(color[ch] - mean[ch]));
                }
                if (gap >= 0.2) break;
                if (tries > 1000) throw PlacementError("color sampling failed for seed " + std::to_string(seed));
            }
            placed.push_back({spec.class_set[cid], cid, px, color});
            const double inv = 1.0 / n;
            labels.push_back({cid, Box{px.cx * inv, px.cy * inv, px.w * inv, px.h * inv}});
            ok = true;
        }
        if (!ok) {
            throw PlacementError("could not place object " + std::to_string(k) + " without overlap after 1000 attempts (seed " +
                                 std::to_string(seed) + ")");
        }
    }

    for (const auto& p : placed) {
        const int y0 = std::max(0, static_cast<int>(std::floor(p.px.y0()))), y1 = std::min(n - 1, static_cast<int>(p.px.y1()));
        const int x0 = std::max(0, static_cast<int>(std::floor(p.px.x0()))), x1 = std::min(n - 1, static_cast<int>(p.px.x1()));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if (detail::inside_shape(p.shape, p.px, x + 0.5, y + 0.5))
                    for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = p.color[ch];
    }

    img.tag = QualityTag::clean();
    return {std::move(img), std::move(labels)};
}

} // namespace gando::synthkit
