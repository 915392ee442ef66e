#pragma once

#include <algorithm>

namespace gando {

/// Axis-aligned box in center form, coordinates normalized to the image.
struct Box {
    double cx = 0, cy = 0, w = 0, h = 0;

    double x0() const noexcept { return cx - w / 2; }
    double y0() const noexcept { return cy - h / 2; }
    double x1() const noexcept { return cx + w / 2; }
    double y1() const noexcept { return cy + h / 2; }
    double area() const noexcept { return w * h; }

    static Box from_corners(double x0, double y0, double x1, double y1) noexcept {
        return {(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0};
    }

    friend bool operator==(const Box&, const Box&) = default;
};

/// Box clipped to the unit square.
inline Box clip_unit(const Box& b) noexcept {
    const double x0 = std::clamp(b.x0(), 0.0, 1.0), x1 = std::clamp(b.x1(), 0.0, 1.0);
    const double y0 = std::clamp(b.y0(), 0.0, 1.0), y1 = std::clamp(b.y1(), 0.0, 1.0);
    return Box::from_corners(x0, y0, x1, y1);
}

/// Intersection over union; 0 when the union has no area.
inline double iou(const Box& a, const Box& b) noexcept {
    const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
    const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

/// Ground-truth object: class index plus box.
struct BoxLabel {
    int class_id = 0;
    Box box;

    friend bool operator==(const BoxLabel&, const BoxLabel&) = default;
};

/// Scored prediction produced by the detector decoder.
struct Detection {
    int class_id = 0;
    double score = 0;
    Box box;
};

} // namespace gando
