#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "gando/core/box.hpp"
#include "gando/core/error.hpp"

namespace gando {

enum class DistortionFamily { gaussian, defocus, camshake, awgn };

inline std::string to_string(DistortionFamily f) {
    switch (f) {
        case DistortionFamily::gaussian: return "gaussian";
        case DistortionFamily::defocus: return "defocus";
        case DistortionFamily::camshake: return "camshake";
        case DistortionFamily::awgn: return "awgn";
    }
    return "unknown";
}

inline DistortionFamily parse_family(const std::string& name) {
    if (name == "gaussian") return DistortionFamily::gaussian;
    if (name == "defocus") return DistortionFamily::defocus;
    if (name == "camshake") return DistortionFamily::camshake;
    if (name == "awgn") return DistortionFamily::awgn;
    throw ConfigError("unknown distortion family '" + name + "' (expected gaussian|defocus|camshake|awgn)");
}

/// Clean images carry no family/level; distorted ones carry both (level is 1-based).
struct QualityTag {
    bool is_clean = true;
    std::optional<DistortionFamily> family;
    std::optional<int> level_index;

    static QualityTag clean() { return {}; }
    static QualityTag distorted(DistortionFamily f, int level) { return {false, f, level}; }

    bool valid() const noexcept { return is_clean == (!family && !level_index); }

    friend bool operator==(const QualityTag&, const QualityTag&) = default;
};

/// Dense H x W x C pixel grid, interleaved (HWC), values in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> pixels;
    QualityTag tag;

    Image() = default;
    Image(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

    float& at(int y, int x, int c) noexcept { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    float at(int y, int x, int c) const noexcept {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    std::size_t size() const noexcept { return pixels.size(); }
    bool same_shape(const Image& o) const noexcept {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

/// Labelled training sample.
struct Sample {
    Image image;
    std::vector<BoxLabel> labels;
};

} // namespace gando
