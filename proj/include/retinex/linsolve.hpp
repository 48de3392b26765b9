#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "retinex/operators.hpp"

namespace retinex {

/**
 * (lambda_I + 1) * I + mu_I * grad^T grad I = rhs
 *
 * The illumination update written as a quotient with grad^T grad in the
 * denominator is this symmetric positive definite system. The boundary
 * convention is the one used by grad/div.
 */
struct IlluminationSystem {
    ImagePlane rhs;
    double lambda_I = 0.0;
    double mu_I = 0.0;

    double diagonal_shift() const noexcept { return lambda_I + 1.0; }

    void validate() const {
        if (!(lambda_I >= 0.0) || !(mu_I >= 0.0)) {
            throw InvariantError("IlluminationSystem: lambda_I and mu_I must be nonnegative");
        }
        validate_plane(rhs, false, "IlluminationSystem rhs");
    }

    ImagePlane apply(const ImagePlane& x) const {
        ImagePlane out = apply_gradient_normal(x);
        const double shift = diagonal_shift();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = shift * x[i] + mu_I * out[i];
        return out;
    }
};

struct CgPolicy {
    double tol = 1e-6;
    int max_iter = 500;
};

struct SolveResult {
    ImagePlane solution;
    int iterations = 0;
    double relative_residual = 0.0;
};

/// Jacobi-preconditioned conjugate gradient. Throws ConvergenceError when
/// ||A x - rhs|| / ||rhs|| > tol after max_iter iterations.
inline SolveResult solve_illumination(const IlluminationSystem& sys, CgPolicy policy = {}) {
    sys.validate();
    if (!(policy.tol > 0.0)) throw InvariantError("solve_illumination: tol must be positive");
    if (policy.max_iter < 1) throw InvariantError("solve_illumination: max_iter must be >= 1");

    const std::size_t h = sys.rhs.height(), w = sys.rhs.width();
    const double rhs_norm = std::sqrt(squared_norm(sys.rhs));
    SolveResult result{ImagePlane(h, w), 0, 0.0};
    if (rhs_norm == 0.0) return result;

    ImagePlane diag(h, w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            diag(r, c) = sys.diagonal_shift() +
                         sys.mu_I * static_cast<double>(neighbour_count(r, c, h, w));
        }
    }

    ImagePlane& x = result.solution;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = sys.rhs[i] / diag[i];

    ImagePlane residual = sys.apply(x);
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = sys.rhs[i] - residual[i];
    ImagePlane z(h, w);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = residual[i] / diag[i];
    ImagePlane direction = z;
    double rz = dot(residual, z);

    double rel = std::sqrt(squared_norm(residual)) / rhs_norm;
    int it = 0;
    while (rel > policy.tol && it < policy.max_iter) {
        const ImagePlane ad = sys.apply(direction);
        const double alpha = rz / dot(direction, ad);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += alpha * direction[i];
            residual[i] -= alpha * ad[i];
        }
        ++it;
        rel = std::sqrt(squared_norm(residual)) / rhs_norm;
        if (rel <= policy.tol) break;
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = residual[i] / diag[i];
        const double rz_next = dot(residual, z);
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t i = 0; i < direction.size(); ++i) direction[i] = z[i] + beta * direction[i];
    }

    // Recurrence residual drifts from the true one; report the true residual.
    ImagePlane check = sys.apply(x);
    double true_sq = 0.0;
    for (std::size_t i = 0; i < check.size(); ++i) {
        const double d = check[i] - sys.rhs[i];
        true_sq += d * d;
    }
    result.iterations = it;
    result.relative_residual = std::sqrt(true_sq) / rhs_norm;
    if (result.relative_residual > policy.tol) {
        throw ConvergenceError("solve_illumination: no convergence after " + std::to_string(it) +
                                   " iterations (relative residual " +
                                   std::to_string(result.relative_residual) + ")",
                               result.relative_residual, it);
    }
    return result;
}

inline constexpr std::size_t dense_oracle_max_pixels = 4096;

/// Assembles A from the 5-point stencil as a dense (HW)x(HW) matrix.
inline Eigen::MatrixXd assemble_illumination_matrix(std::size_t height, std::size_t width,
                                                    double lambda_I, double mu_I) {
    const std::size_t n = height * width;
    if (n > dense_oracle_max_pixels) {
        throw InvariantError("dense illumination matrix: " + std::to_string(n) +
                             " pixels exceeds the guard of " +
                             std::to_string(dense_oracle_max_pixels));
    }
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    auto idx = [width](std::size_t r, std::size_t c) {
        return static_cast<Eigen::Index>(r * width + c);
    };
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
            const auto i = idx(r, c);
            a(i, i) = lambda_I + 1.0 +
                      mu_I * static_cast<double>(neighbour_count(r, c, height, width));
            if (c > 0) a(i, idx(r, c - 1)) = -mu_I;
            if (c + 1 < width) a(i, idx(r, c + 1)) = -mu_I;
            if (r > 0) a(i, idx(r - 1, c)) = -mu_I;
            if (r + 1 < height) a(i, idx(r + 1, c)) = -mu_I;
        }
    }
    return a;
}

/// Direct (Cholesky) solve of the materialized system; a reference for small planes.
inline ImagePlane dense_solve_oracle(const IlluminationSystem& sys) {
    sys.validate();
    const std::size_t h = sys.rhs.height(), w = sys.rhs.width();
    const Eigen::MatrixXd a = assemble_illumination_matrix(h, w, sys.lambda_I, sys.mu_I);
    Eigen::VectorXd b(static_cast<Eigen::Index>(h * w));
    for (std::size_t i = 0; i < h * w; ++i) b(static_cast<Eigen::Index>(i)) = sys.rhs[i];
    const Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
        throw Error("dense_solve_oracle: factorization failed on a positive definite system");
    }
    const Eigen::VectorXd x = llt.solve(b);
    ImagePlane out(h, w);
    for (std::size_t i = 0; i < h * w; ++i) out[i] = x(static_cast<Eigen::Index>(i));
    return out;
}

}  // namespace retinex
