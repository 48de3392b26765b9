#pragma once

#include <algorithm>
#include <cmath>

#include "retinex/image.hpp"

namespace retinex {

/// Forward differences of a plane. The last column of dx and the last row of
/// dy are zero (replicate/Neumann boundary).
template <typename T>
struct GradientPair {
    Plane<T> dx;
    Plane<T> dy;
};

template <typename T>
GradientPair<T> grad(const Plane<T>& p) {
    const std::size_t h = p.height(), w = p.width();
    GradientPair<T> g{Plane<T>(h, w), Plane<T>(h, w)};
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c + 1 < w; ++c) g.dx(r, c) = p(r, c + 1) - p(r, c);
    }
    for (std::size_t r = 0; r + 1 < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) g.dy(r, c) = p(r + 1, c) - p(r, c);
    }
    return g;
}

/// Negative adjoint of grad: <grad p, g> = -<p, div g>.
template <typename T>
Plane<T> div(const GradientPair<T>& g) {
    require_same_shape(g.dx, g.dy, "div");
    const std::size_t h = g.dx.height(), w = g.dx.width();
    Plane<T> out(h, w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            T v{0};
            if (c + 1 < w) v += g.dx(r, c);
            if (c > 0) v -= g.dx(r, c - 1);
            if (r + 1 < h) v += g.dy(r, c);
            if (r > 0) v -= g.dy(r - 1, c);
            out(r, c) = v;
        }
    }
    return out;
}

/// grad^T grad p, the 5-point Laplacian with Neumann boundary (positive semidefinite sign).
template <typename T>
Plane<T> apply_gradient_normal(const Plane<T>& p) {
    const std::size_t h = p.height(), w = p.width();
    Plane<T> out(h, w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const T center = p(r, c);
            T v{0};
            if (c > 0) v += center - p(r, c - 1);
            if (c + 1 < w) v += center - p(r, c + 1);
            if (r > 0) v += center - p(r - 1, c);
            if (r + 1 < h) v += center - p(r + 1, c);
            out(r, c) = v;
        }
    }
    return out;
}

/// Number of in-bounds 4-neighbours, i.e. the diagonal of grad^T grad.
inline std::size_t neighbour_count(std::size_t r, std::size_t c, std::size_t h, std::size_t w) {
    return (c > 0) + (c + 1 < w) + (r > 0) + (r + 1 < h);
}

template <typename T>
Plane<T> project_box(Plane<T> p, T lo, T hi) {
    if (lo > hi) throw InvariantError("project_box: lo > hi");
    for (T& v : p.values()) v = std::clamp(v, lo, hi);
    return p;
}

template <typename T>
Plane<T> project_box(Plane<T> p, T lo, const Plane<T>& hi) {
    require_same_shape(p, hi, "project_box");
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (lo > hi[i]) throw InvariantError("project_box: lo > hi");
        p[i] = std::clamp(p[i], lo, hi[i]);
    }
    return p;
}

template <typename T>
Plane<T> project_box(Plane<T> p, const Plane<T>& lo, const Plane<T>& hi) {
    require_same_shape(p, lo, "project_box");
    require_same_shape(p, hi, "project_box");
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (lo[i] > hi[i]) throw InvariantError("project_box: lo > hi");
        p[i] = std::clamp(p[i], lo[i], hi[i]);
    }
    return p;
}

namespace detail {
template <typename T>
void require_positive_theta(T theta, const char* where) {
    if (!(theta > T{0})) throw InvariantError(std::string(where) + ": theta must be positive");
}
}  // namespace detail

/// Sum over both difference directions of log(1 + theta * d^2).
template <typename T>
T log_potential(const GradientPair<T>& g, T theta) {
    detail::require_positive_theta(theta, "log_potential");
    require_same_shape(g.dx, g.dy, "log_potential");
    T sum{0};
    for (std::size_t i = 0; i < g.dx.size(); ++i) {
        sum += std::log1p(theta * g.dx[i] * g.dx[i]);
        sum += std::log1p(theta * g.dy[i] * g.dy[i]);
    }
    return sum;
}

/// Gradient of log_potential(grad(R), theta) with respect to R.
template <typename T>
Plane<T> log_potential_grad(const Plane<T>& r, T theta) {
    detail::require_positive_theta(theta, "log_potential_grad");
    GradientPair<T> g = grad(r);
    auto weight = [theta](T d) { return T{2} * theta * d / (T{1} + theta * d * d); };
    for (T& v : g.dx.values()) v = weight(v);
    for (T& v : g.dy.values()) v = weight(v);
    Plane<T> out = div(g);
    for (T& v : out.values()) v = -v;
    return out;
}

template <typename T>
T dot(const Plane<T>& a, const Plane<T>& b) {
    require_same_shape(a, b, "dot");
    T sum{0};
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

template <typename T>
T squared_norm(const Plane<T>& a) {
    T sum{0};
    for (T v : a.values()) sum += v * v;
    return sum;
}

}  // namespace retinex
