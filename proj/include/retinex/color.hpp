#pragma once

#include <algorithm>
#include <cmath>

#include "retinex/image.hpp"

namespace retinex {

struct HsvPlanes {
    ImagePlane hue;         // [0,1), degrees / 360
    ImagePlane saturation;  // [0,1]
    ImagePlane value;       // [0,1], max(R,G,B)
};

namespace detail {

struct Hsv {
    double h, s, v;
};

inline Hsv rgb_to_hsv_pixel(double r, double g, double b) noexcept {
    const double maxc = std::max({r, g, b});
    const double minc = std::min({r, g, b});
    const double delta = maxc - minc;
    Hsv out{0.0, 0.0, maxc};
    if (maxc <= 0.0 || delta <= 0.0) return out;  // achromatic: H = S = 0
    out.s = delta / maxc;
    double h;
    if (maxc == r) {
        h = (g - b) / delta;
    } else if (maxc == g) {
        h = 2.0 + (b - r) / delta;
    } else {
        h = 4.0 + (r - g) / delta;
    }
    h /= 6.0;
    if (h < 0.0) h += 1.0;
    if (h >= 1.0) h -= 1.0;
    out.h = h;
    return out;
}

inline void hsv_to_rgb_pixel(double h, double s, double v, double& r, double& g, double& b) noexcept {
    if (s <= 0.0) {
        r = g = b = v;
        return;
    }
    const double h6 = h * 6.0;
    const double sector = std::floor(h6);
    const double f = h6 - sector;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (static_cast<int>(sector) % 6) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

}  // namespace detail

inline HsvPlanes rgb_to_hsv(const ColorImage& img) {
    HsvPlanes out{ImagePlane(img.height(), img.width()), ImagePlane(img.height(), img.width()),
                  ImagePlane(img.height(), img.width())};
    const auto px = img.values();
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const auto hsv = detail::rgb_to_hsv_pixel(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
        out.hue[i] = hsv.h;
        out.saturation[i] = hsv.s;
        out.value[i] = hsv.v;
    }
    return out;
}

inline ColorImage hsv_to_rgb(const ImagePlane& hue, const ImagePlane& saturation,
                             const ImagePlane& value) {
    require_same_shape(hue, saturation, "hsv_to_rgb");
    require_same_shape(hue, value, "hsv_to_rgb");
    ColorImage out(hue.height(), hue.width());
    auto px = out.values();
    for (std::size_t i = 0; i < hue.size(); ++i) {
        detail::hsv_to_rgb_pixel(hue[i], saturation[i], value[i], px[3 * i], px[3 * i + 1],
                                 px[3 * i + 2]);
    }
    return out;
}

inline ColorImage hsv_to_rgb(const HsvPlanes& hsv) {
    return hsv_to_rgb(hsv.hue, hsv.saturation, hsv.value);
}

}  // namespace retinex
