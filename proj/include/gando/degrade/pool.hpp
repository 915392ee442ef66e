#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "gando/core/error.hpp"
#include "gando/core/image.hpp"
#include "gando/core/rng.hpp"
#include "gando/degrade/filter.hpp"
#include "gando/degrade/kernel.hpp"

namespace gando::degrade {

/// One degradation level: a blur kernel or an AWGN standard deviation (0-255 scale).
using Level = std::variant<Kernel, double>;

/// Ordered levels of one distortion family; level j is 1-based.
struct DistortionPool {
    DistortionFamily family = DistortionFamily::gaussian;
    std::vector<Level> levels;

    int size() const noexcept { return static_cast<int>(levels.size()); }
};

/// Standard pool: blur radii {2..12}, AWGN sigma {20..100}, or 50 seeded camera-shake kernels.
/// `subset` optionally restricts to the listed radii / sigmas / camera-shake indices (1-based).
inline DistortionPool make_pool(DistortionFamily family, std::uint64_t seed = 0, const std::vector<int>& subset = {}) {
    DistortionPool pool;
    pool.family = family;
    switch (family) {
        case DistortionFamily::gaussian:
        case DistortionFamily::defocus: {
            std::vector<int> radii = subset.empty() ? std::vector<int>(std::begin(kBlurRadii), std::end(kBlurRadii)) : subset;
            for (int r : radii)
                pool.levels.emplace_back(family == DistortionFamily::gaussian ? gaussian_kernel(r) : defocus_kernel(r));
            break;
        }
        case DistortionFamily::awgn: {
            std::vector<int> sigmas = subset.empty() ? std::vector<int>(std::begin(kAwgnSigmas), std::end(kAwgnSigmas)) : subset;
            for (int s : sigmas) {
                if (std::find(std::begin(kAwgnSigmas), std::end(kAwgnSigmas), s) == std::end(kAwgnSigmas))
                    throw LevelError("AWGN sigma " + std::to_string(s) + " is not in the pool {20,40,60,80,100}");
                pool.levels.emplace_back(static_cast<double>(s));
            }
            break;
        }
        case DistortionFamily::camshake: {
            std::vector<int> idx = subset;
            if (idx.empty())
                for (int j = 1; j <= kCamshakePoolSize; ++j) idx.push_back(j);
            for (int j : idx) {
                if (j < 1 || j > kCamshakePoolSize)
                    throw LevelError("camera-shake level " + std::to_string(j) + " outside [1, 50]");
                Kernel k = camshake_kernel(substream(seed, {static_cast<std::uint64_t>(j)}));
                k.level_index = j;
                pool.levels.emplace_back(std::move(k));
            }
            break;
        }
    }
    return pool;
}

/// Pool holding a single kernel (used for no-op and fixed-level evaluation).
inline DistortionPool single_kernel_pool(Kernel k) {
    DistortionPool pool;
    pool.family = k.family;
    if (k.level_index == 0) k.level_index = 1;
    pool.levels.emplace_back(std::move(k));
    return pool;
}

/// Applies level j (1-based) of the pool. `seed` only matters for AWGN.
inline Image apply_level(const Image& image, const DistortionPool& pool, int j, std::uint64_t seed) {
    if (j < 1 || j > pool.size())
        throw LevelError("level index " + std::to_string(j) + " outside valid range [1, " + std::to_string(pool.size()) + "]");
    const Level& level = pool.levels[static_cast<std::size_t>(j - 1)];
    Image out = std::holds_alternative<Kernel>(level) ? convolve2d(image, std::get<Kernel>(level))
                                                      : awgn(image, std::get<double>(level), seed);
    out.tag = QualityTag::distorted(pool.family, j);
    return out;
}

/// Draws j ~ U[1, J] and applies it.
inline Image apply_random_level(const Image& image, const DistortionPool& pool, Rng& rng) {
    if (pool.size() < 1) throw LevelError("distortion pool is empty");
    const int j = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(pool.size())));
    const std::uint64_t noise_seed = rng();
    return apply_level(image, pool, j, noise_seed);
}

/// Mixed mini-batch: first S/2 items clean, the rest degraded by a random pool level.
/// Item s draws from its own substream of `batch_seed`, so the result is schedule independent.
inline std::vector<Sample> augment_minibatch(const std::vector<Sample>& batch, const DistortionPool& pool,
                                             std::uint64_t batch_seed) {
    if (batch.size() % 2 != 0)
        throw BatchSizeError("augmented mini-batch needs an even size, got " + std::to_string(batch.size()));
    const std::size_t half = batch.size() / 2;
    std::vector<Sample> out;
    out.reserve(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
        Sample item{Image{}, batch[s].labels};
        if (s < half) {
            item.image = batch[s].image;
            item.image.tag = QualityTag::clean();
        } else {
            Rng rng = make_rng(batch_seed, {static_cast<std::uint64_t>(s)});
            item.image = apply_random_level(batch[s].image, pool, rng);
        }
        out.push_back(std::move(item));
    }
    return out;
}

inline std::vector<Sample> augment_minibatch(const std::vector<Sample>& batch, const DistortionPool& pool, Rng& rng) {
    return augment_minibatch(batch, pool, rng());
}

} // namespace gando::degrade
