#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>

#include "gando/core/error.hpp"
#include "gando/core/fs.hpp"
#include "gando/core/image.hpp"

namespace gando {

/// Binary PPM (P6), 8 bits per channel; 3-channel images only.
inline std::string encode_ppm(const Image& img) {
    if (img.channels != 3) throw ShapeError("PPM needs 3 channels");
    std::string s = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    for (float p : img.pixels) s.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f))));
    return s;
}

/// Portable float map ("PF", little-endian, rows stored bottom to top); exact for float pixels.
inline std::string encode_pfm(const Image& img) {
    if (img.channels != 3) throw ShapeError("PFM needs 3 channels");
    std::string s = "PF\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n-1.0\n";
    for (int y = img.height - 1; y >= 0; --y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const std::uint32_t v = std::bit_cast<std::uint32_t>(img.at(y, x, c));
                for (int b = 0; b < 4; ++b) s.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
            }
    return s;
}

inline Image decode_image(const std::string& bytes, const std::string& what = "image") {
    std::istringstream is(bytes);
    std::string magic;
    int w = 0, h = 0;
    is >> magic >> w >> h;
    if (magic != "P6" && magic != "PF") throw LoadError(what + ": unsupported format (expected P6 PPM or PF PFM)");
    if (w <= 0 || h <= 0) throw LoadError(what + ": bad dimensions");
    Image img(h, w, 3);
    if (magic == "P6") {
        int maxv = 0;
        is >> maxv;
        is.get();
        if (maxv != 255) throw LoadError(what + ": only 8-bit PPM is supported");
        std::size_t pos = static_cast<std::size_t>(is.tellg());
        if (bytes.size() < pos + img.size()) throw LoadError(what + ": truncated PPM");
        for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0f;
    } else {
        double scale = 0;
        is >> scale;
        is.get();
        if (scale >= 0) throw LoadError(what + ": big-endian PFM is not supported");
        std::size_t pos = static_cast<std::size_t>(is.tellg());
        if (bytes.size() < pos + img.size() * 4) throw LoadError(what + ": truncated PFM");
        for (int y = h - 1; y >= 0; --y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) {
                    std::uint32_t v = 0;
                    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + b])) << (8 * b);
                    pos += 4;
                    img.at(y, x, c) = std::bit_cast<float>(v);
                }
    }
    return img;
}

inline Image read_image(const std::filesystem::path& path) { return decode_image(read_file(path), path.string()); }

} // namespace gando
