#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "gando/core/error.hpp"
#include "gando/core/image.hpp"
#include "gando/core/rng.hpp"

namespace gando::degrade {

/// Normalized 2D blur kernel. Taps are row-major, side is odd, center at (side/2, side/2).
struct Kernel {
    int side = 1;
    std::vector<double> taps{1.0};
    DistortionFamily family = DistortionFamily::gaussian;
    int level_index = 0;  // 1-based position in its pool; 0 for ad-hoc kernels
    double nominal_radius = 0;

    int radius() const noexcept { return side / 2; }
    double at(int row, int col) const noexcept { return taps[static_cast<std::size_t>(row) * side + col]; }
    /// Tap at offset (du, dv) from the center.
    double offset(int du, int dv) const noexcept { return at(dv + radius(), du + radius()); }

    double sum() const { return std::accumulate(taps.begin(), taps.end(), 0.0); }
    std::size_t nonzero() const {
        return static_cast<std::size_t>(std::count_if(taps.begin(), taps.end(), [](double t) { return t != 0.0; }));
    }

    static Kernel identity() { return {}; }
};

inline constexpr int kBlurRadii[] = {2, 4, 6, 8, 10, 12};
inline constexpr int kAwgnSigmas[] = {20, 40, 60, 80, 100};
inline constexpr int kCamshakePoolSize = 50;
inline constexpr int kCamshakeDefaultSize = 21;

inline int blur_level_index(int radius) {
    for (int j = 0; j < 6; ++j)
        if (kBlurRadii[j] == radius) return j + 1;
    throw LevelError("blur radius " + std::to_string(radius) + " is not in the pool {2,4,6,8,10,12}");
}

namespace detail {

inline void normalize(std::vector<double>& taps) {
    const double s = std::accumulate(taps.begin(), taps.end(), 0.0);
    for (auto& t : taps) t /= s;
}

} // namespace detail

/// Gaussian blur with sigma = radius / 2 on a (2r+1)^2 support.
inline Kernel gaussian_kernel(int radius) {
    Kernel k;
    k.family = DistortionFamily::gaussian;
    k.level_index = blur_level_index(radius);
    k.nominal_radius = radius;
    k.side = 2 * radius + 1;
    k.taps.assign(static_cast<std::size_t>(k.side) * k.side, 0.0);
    const double sigma = radius / 2.0;
    for (int v = -radius; v <= radius; ++v)
        for (int u = -radius; u <= radius; ++u)
            k.taps[static_cast<std::size_t>(v + radius) * k.side + (u + radius)] =
                std::exp(-(u * u + v * v) / (2.0 * sigma * sigma));
    detail::normalize(k.taps);
    return k;
}

/// Uniform disk (circular average) over integer offsets with u^2 + v^2 <= r^2.
inline Kernel defocus_kernel(int radius) {
    Kernel k;
    k.family = DistortionFamily::defocus;
    k.level_index = blur_level_index(radius);
    k.nominal_radius = radius;
    k.side = 2 * radius + 1;
    k.taps.assign(static_cast<std::size_t>(k.side) * k.side, 0.0);
    std::size_t count = 0;
    for (int v = -radius; v <= radius; ++v)
        for (int u = -radius; u <= radius; ++u)
            if (u * u + v * v <= radius * radius) ++count;
    const double w = 1.0 / static_cast<double>(count);
    for (int v = -radius; v <= radius; ++v)
        for (int u = -radius; u <= radius; ++u)
            if (u * u + v * v <= radius * radius) k.taps[static_cast<std::size_t>(v + radius) * k.side + (u + radius)] = w;
    return k;
}

/// Camera-shake kernel: a seeded Gaussian random walk of 4-8 control points,
/// Catmull-Rom interpolated into 200 samples and bilinearly splatted.
inline Kernel camshake_kernel(std::uint64_t seed, int size = kCamshakeDefaultSize) {
    if (size < 3 || size % 2 == 0) throw LevelError("camera-shake kernel size must be odd and >= 3");
    Rng rng = make_rng(seed, {0xca5e});
    const int n_ctrl = 4 + static_cast<int>(uniform_index(rng, 5));
    const double step = size / 6.0;

    std::vector<double> cx(n_ctrl), cy(n_ctrl);
    for (int i = 1; i < n_ctrl; ++i) {
        cx[i] = cx[i - 1] + step * standard_normal(rng);
        cy[i] = cy[i - 1] + step * standard_normal(rng);
    }

    constexpr int kSamples = 200;
    std::vector<double> px(kSamples), py(kSamples);
    auto ctrl = [&](const std::vector<double>& c, int i) { return c[std::clamp(i, 0, n_ctrl - 1)]; };
    for (int s = 0; s < kSamples; ++s) {
        const double t = static_cast<double>(s) / (kSamples - 1) * (n_ctrl - 1);
        const int i = std::min(static_cast<int>(t), n_ctrl - 2);
        const double f = t - i, f2 = f * f, f3 = f2 * f;
        auto cr = [&](const std::vector<double>& c) {
            const double p0 = ctrl(c, i - 1), p1 = ctrl(c, i), p2 = ctrl(c, i + 1), p3 = ctrl(c, i + 2);
            return 0.5 * ((2 * p1) + (-p0 + p2) * f + (2 * p0 - 5 * p1 + 4 * p2 - p3) * f2 + (-p0 + 3 * p1 - 3 * p2 + p3) * f3);
        };
        px[s] = cr(cx);
        py[s] = cr(cy);
    }

    // center on the trajectory's bounding box and fit inside the support
    const auto [minx, maxx] = std::minmax_element(px.begin(), px.end());
    const auto [miny, maxy] = std::minmax_element(py.begin(), py.end());
    const double mx = (*minx + *maxx) / 2, my = (*miny + *maxy) / 2;
    const double extent = std::max({*maxx - *minx, *maxy - *miny, 1e-9});
    const double limit = size - 3.0;  // leave one pixel for bilinear spill on each side
    const double scale = extent > limit ? limit / extent : (extent < 2.0 ? 2.0 / extent : 1.0);

    Kernel k;
    k.family = DistortionFamily::camshake;
    k.side = size;
    k.nominal_radius = size / 2;
    k.taps.assign(static_cast<std::size_t>(size) * size, 0.0);
    const double c = size / 2;
    for (int s = 0; s < kSamples; ++s) {
        const double x = c + (px[s] - mx) * scale, y = c + (py[s] - my) * scale;
        const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
        const double fx = x - x0, fy = y - y0;
        auto splat = [&](int xx, int yy, double w) {
            if (xx >= 0 && xx < size && yy >= 0 && yy < size) k.taps[static_cast<std::size_t>(yy) * size + xx] += w;
        };
        splat(x0, y0, (1 - fx) * (1 - fy));
        splat(x0 + 1, y0, fx * (1 - fy));
        splat(x0, y0 + 1, (1 - fx) * fy);
        splat(x0 + 1, y0 + 1, fx * fy);
    }
    detail::normalize(k.taps);
    return k;
}

} // namespace gando::degrade
