#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "retinex/error.hpp"

namespace retinex {

/**
 * Single-channel raster stored row-major.
 *
 * Holds the observed image O, the illumination I, the reflectance R and the
 * auxiliary planes of the propagation. Auxiliary planes (gradients, right-hand
 * sides) may leave [0,1]; the image-valued ones must not.
 */
template <typename T>
class Plane {
public:
    using value_type = T;

    Plane() = default;
    Plane(std::size_t height, std::size_t width, T fill = T{0})
        : height_(height), width_(width), data_(height * width, fill) {}
    Plane(std::size_t height, std::size_t width, std::vector<T> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != height_ * width_) {
            throw ShapeError("plane data length " + std::to_string(data_.size()) +
                             " != " + std::to_string(height_) + "x" + std::to_string(width_));
        }
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t row, std::size_t col) noexcept { return data_[row * width_ + col]; }
    const T& operator()(std::size_t row, std::size_t col) const noexcept {
        return data_[row * width_ + col];
    }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    bool same_shape(const Plane& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    friend bool operator==(const Plane&, const Plane&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<T> data_;
};

using ImagePlane = Plane<double>;

template <typename T>
void require_same_shape(const Plane<T>& a, const Plane<T>& b, const char* context) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(context) + ": shape mismatch (" + std::to_string(a.height()) +
                         "x" + std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                         "x" + std::to_string(b.width()) + ")");
    }
}

template <typename T>
bool all_finite(const Plane<T>& p) {
    return std::all_of(p.values().begin(), p.values().end(),
                       [](T v) { return std::isfinite(v); });
}

template <typename T>
bool within_unit_box(const Plane<T>& p) {
    return std::all_of(p.values().begin(), p.values().end(),
                       [](T v) { return v >= T{0} && v <= T{1}; });
}

/// Throws unless every value is finite and, when `unit_range`, inside [0,1].
template <typename T>
void validate_plane(const Plane<T>& p, bool unit_range, const char* what) {
    if (!all_finite(p)) throw InvariantError(std::string(what) + ": non-finite value");
    if (unit_range && !within_unit_box(p)) {
        throw InvariantError(std::string(what) + ": value outside [0,1]");
    }
}

template <typename T>
T mean(const Plane<T>& p) {
    if (p.empty()) return T{0};
    T sum{0};
    for (T v : p.values()) sum += v;
    return sum / static_cast<T>(p.size());
}

/// Three-channel RGB image, interleaved (r,g,b per pixel), values in [0,1].
class ColorImage {
public:
    static constexpr std::size_t channels = 3;

    ColorImage() = default;
    ColorImage(std::size_t height, std::size_t width, double fill = 0.0)
        : height_(height), width_(width), data_(height * width * channels, fill) {}
    ColorImage(std::size_t height, std::size_t width, std::vector<double> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != height_ * width_ * channels) {
            throw ShapeError("color image data length mismatch");
        }
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t pixel_count() const noexcept { return height_ * width_; }

    double& at(std::size_t row, std::size_t col, std::size_t ch) noexcept {
        return data_[(row * width_ + col) * channels + ch];
    }
    double at(std::size_t row, std::size_t col, std::size_t ch) const noexcept {
        return data_[(row * width_ + col) * channels + ch];
    }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    ImagePlane channel(std::size_t ch) const {
        ImagePlane out(height_, width_);
        for (std::size_t i = 0; i < pixel_count(); ++i) out[i] = data_[i * channels + ch];
        return out;
    }

    static ColorImage from_planes(const ImagePlane& r, const ImagePlane& g, const ImagePlane& b) {
        require_same_shape(r, g, "ColorImage::from_planes");
        require_same_shape(r, b, "ColorImage::from_planes");
        ColorImage out(r.height(), r.width());
        for (std::size_t i = 0; i < r.size(); ++i) {
            out.data_[i * channels + 0] = r[i];
            out.data_[i * channels + 1] = g[i];
            out.data_[i * channels + 2] = b[i];
        }
        return out;
    }

    static ColorImage from_gray(const ImagePlane& gray) { return from_planes(gray, gray, gray); }

    friend bool operator==(const ColorImage&, const ColorImage&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

inline void validate_image(const ColorImage& img, const char* what) {
    for (double v : img.values()) {
        if (!std::isfinite(v)) throw InvariantError(std::string(what) + ": non-finite value");
        if (v < 0.0 || v > 1.0) throw InvariantError(std::string(what) + ": value outside [0,1]");
    }
}

/**
 * Rounds a value in [0,1] to the nearest multiple of 2^-53.
 *
 * On that lattice 1 - x is computed exactly, so the photometric inverse used
 * by the dehazing wrapper is a true involution. The perturbation is at most
 * 2^-54.
 */
inline double snap_to_lattice(double v) noexcept {
    constexpr double scale = 9007199254740992.0;  // 2^53
    return std::nearbyint(v * scale) / scale;
}

inline ImagePlane snap_to_lattice(ImagePlane p) {
    for (double& v : p.values()) v = snap_to_lattice(v);
    return p;
}

inline ColorImage snap_to_lattice(ColorImage img) {
    for (double& v : img.values()) v = snap_to_lattice(v);
    return img;
}

/// 1 - x on the 2^-53 lattice; invert(invert(x)) == snap_to_lattice(x) bitwise.
inline ColorImage photometric_invert(const ColorImage& img) {
    ColorImage out = img;
    for (double& v : out.values()) v = 1.0 - snap_to_lattice(v);
    return out;
}

}  // namespace retinex
