#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "gando/core/error.hpp"
#include "gando/core/image.hpp"
#include "gando/core/rng.hpp"
#include "gando/degrade/kernel.hpp"

namespace gando::degrade {

/// Full 2D convolution (kernel flipped) with edge-replicate padding; output clipped to [0,1].
inline Image convolve2d(const Image& image, const Kernel& kernel) {
    if (kernel.side % 2 == 0 || kernel.taps.size() != static_cast<std::size_t>(kernel.side) * kernel.side)
        throw ShapeError("kernel must be square with odd side");
    const int h = image.height, w = image.width, nc = image.channels, r = kernel.radius();
    const int pw = w + 2 * r;
    Image out(h, w, nc);
    out.tag = image.tag;

    std::vector<double> padded(static_cast<std::size_t>(h + 2 * r) * pw);
    std::vector<double> acc(static_cast<std::size_t>(w));
    for (int c = 0; c < nc; ++c) {
        for (int y = 0; y < h + 2 * r; ++y) {
            const int sy = std::clamp(y - r, 0, h - 1);
            for (int x = 0; x < pw; ++x) {
                const int sx = std::clamp(x - r, 0, w - 1);
                padded[static_cast<std::size_t>(y) * pw + x] = image.at(sy, sx, c);
            }
        }
        for (int y = 0; y < h; ++y) {
            std::fill(acc.begin(), acc.end(), 0.0);
            // out(y,x) = sum_{dv,du} k(dv,du) * in(y - dv, x - du)
            for (int dv = -r; dv <= r; ++dv) {
                const double* row = &padded[static_cast<std::size_t>(y - dv + r) * pw + r];
                for (int du = -r; du <= r; ++du) {
                    const double t = kernel.offset(du, dv);
                    if (t == 0.0) continue;
                    const double* src = row - du;
                    for (int x = 0; x < w; ++x) acc[x] += t * src[x];
                }
            }
            for (int x = 0; x < w; ++x) out.at(y, x, c) = static_cast<float>(std::clamp(acc[x], 0.0, 1.0));
        }
    }
    return out;
}

/// Additive white Gaussian noise, sigma given on the 0-255 scale. sigma 0 is a no-op.
inline Image awgn(const Image& image, double sigma_255, std::uint64_t seed) {
    if (sigma_255 != 0.0 && std::find(std::begin(kAwgnSigmas), std::end(kAwgnSigmas), sigma_255) == std::end(kAwgnSigmas))
        throw LevelError("AWGN sigma " + std::to_string(sigma_255) + " is not in the pool {20,40,60,80,100}");
    Image out = image;
    if (sigma_255 == 0.0) return out;
    const double sigma = sigma_255 / 255.0;
    Rng rng = make_rng(seed, {0xa3a9});
    for (auto& p : out.pixels) p = static_cast<float>(std::clamp(p + sigma * standard_normal(rng), 0.0, 1.0));
    return out;
}

} // namespace gando::degrade
