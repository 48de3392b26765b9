#include <gtest/gtest.h>

#include <random>

#include "retinex/linsolve.hpp"
#include "test_support.hpp"

namespace retinex {
namespace {

using testing::Rng;

constexpr CgPolicy tight{1e-12, 2000};

TEST(SolveIllumination, DiagonalSystemIsExactDivision) {
    Rng rng(1);
    const IlluminationSystem sys{testing::random_plane(rng, 5, 4, 0.0, 3.0), 2.5, 0.0};
    const auto res = solve_illumination(sys);
    for (std::size_t i = 0; i < sys.rhs.size(); ++i) EXPECT_EQ(res.solution[i], sys.rhs[i] / 3.5);
}

TEST(SolveIllumination, ConstantRhsGivesConstantSolution) {
    const IlluminationSystem sys{ImagePlane(6, 7, 0.8), 1.0, 5.0};
    const auto res = solve_illumination(sys, tight);
    for (double v : res.solution.values()) EXPECT_NEAR(v, 0.4, 1e-12);
}

TEST(SolveIllumination, ZeroRhsReturnsZero) {
    const auto res = solve_illumination({ImagePlane(4, 4), 1.0, 3.0});
    EXPECT_EQ(res.iterations, 0);
    for (double v : res.solution.values()) EXPECT_EQ(v, 0.0);
}

TEST(SolveIllumination, MatchesDenseOracleOnRandomSystem) {
    Rng rng(2);
    const IlluminationSystem sys{testing::random_plane(rng, 5, 4, 0.0, 2.0), 0.7, 4.0};
    const auto res = solve_illumination(sys, tight);
    EXPECT_LE(testing::max_abs_diff(res.solution, dense_solve_oracle(sys)), 1e-8);
}

TEST(SolveIllumination, ResidualWithinToleranceWhenConverged) {
    Rng rng(3);
    for (double tol : {1e-4, 1e-6, 1e-9}) {
        const IlluminationSystem sys{testing::random_plane(rng, 20, 17, 0.0, 5.0), 1.0, 8.0};
        const auto res = solve_illumination(sys, {tol, 500});
        const ImagePlane ax = sys.apply(res.solution);
        double num = 0.0;
        for (std::size_t i = 0; i < ax.size(); ++i) num += (ax[i] - sys.rhs[i]) * (ax[i] - sys.rhs[i]);
        EXPECT_LE(std::sqrt(num / squared_norm(sys.rhs)), tol);
        EXPECT_NEAR(res.relative_residual, std::sqrt(num / squared_norm(sys.rhs)), 1e-15);
    }
}

TEST(SolveIllumination, ReportsNonConvergence) {
    Rng rng(4);
    const IlluminationSystem sys{testing::random_plane(rng, 30, 30), 0.0, 50.0};
    try {
        solve_illumination(sys, {1e-14, 2});
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_EQ(e.iterations(), 2);
        EXPECT_GT(e.residual(), 1e-14);
    }
}

TEST(SolveIllumination, MonotoneInRhsForDiagonalCase) {
    Rng rng(5);
    const ImagePlane a = testing::random_plane(rng, 4, 4);
    ImagePlane b = a;
    for (double& v : b.values()) v += 0.1;
    const auto xa = solve_illumination({a, 1.3, 0.0}).solution;
    const auto xb = solve_illumination({b, 1.3, 0.0}).solution;
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LE(xa[i], xb[i]);
}

TEST(SolveIllumination, RejectsBadInputs) {
    EXPECT_THROW(solve_illumination({ImagePlane(2, 2, 1.0), -0.5, 1.0}), InvariantError);
    EXPECT_THROW(solve_illumination({ImagePlane(2, 2, 1.0), 1.0, 1.0}, {0.0, 10}), InvariantError);
}

TEST(DenseOracle, ScalarCase) {
    const auto x = dense_solve_oracle({ImagePlane(1, 1, 3.0), 2.0, 7.0});
    EXPECT_DOUBLE_EQ(x[0], 1.0);
}

TEST(DenseOracle, HandSolvedTwoByOne) {
    const Eigen::MatrixXd a = assemble_illumination_matrix(2, 1, 0.0, 1.0);
    EXPECT_EQ(a(0, 0), 2.0);
    EXPECT_EQ(a(0, 1), -1.0);
    EXPECT_EQ(a(1, 0), -1.0);
    EXPECT_EQ(a(1, 1), 2.0);
    const auto x = dense_solve_oracle({ImagePlane(2, 1, 1.0), 0.0, 1.0});
    EXPECT_NEAR(x[0], 1.0, 1e-15);
    EXPECT_NEAR(x[1], 1.0, 1e-15);
}

TEST(DenseOracle, StencilMatrixMatchesOperatorOnBasisVectors) {
    const std::size_t h = 6, w = 6;
    const double lambda = 0.8, mu = 3.0;
    const Eigen::MatrixXd a = assemble_illumination_matrix(h, w, lambda, mu);
    const IlluminationSystem sys{ImagePlane(h, w), lambda, mu};
    for (std::size_t j = 0; j < h * w; ++j) {
        ImagePlane e(h, w);
        e[j] = 1.0;
        const ImagePlane col = sys.apply(e);
        for (std::size_t i = 0; i < h * w; ++i) {
            ASSERT_EQ(a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), col[i]);
        }
    }
    EXPECT_EQ((a - a.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(DenseOracle, DimensionGuard) {
    EXPECT_THROW(dense_solve_oracle({ImagePlane(65, 64), 1.0, 1.0}), InvariantError);
}

}  // namespace
}  // namespace retinex
