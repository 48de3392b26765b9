#include <gtest/gtest.h>

#include <cmath>

#include "retinex/operators.hpp"
#include "test_support.hpp"

namespace retinex {
namespace {

using testing::Rng;

TEST(Grad, ConstantPlaneHasZeroGradient) {
    const auto g = grad(ImagePlane(4, 5, 0.3));
    for (double v : g.dx.values()) EXPECT_EQ(v, 0.0);
    for (double v : g.dy.values()) EXPECT_EQ(v, 0.0);
}

TEST(Grad, LinearRamp) {
    const auto g = grad(ImagePlane(1, 3, {0.0, 0.5, 1.0}));
    EXPECT_EQ(g.dx[0], 0.5);
    EXPECT_EQ(g.dx[1], 0.5);
    EXPECT_EQ(g.dx[2], 0.0);
    for (double v : g.dy.values()) EXPECT_EQ(v, 0.0);
}

TEST(Grad, MatchesLoopOracleAndBoundaryIsZero) {
    Rng rng(1);
    const ImagePlane p = testing::random_plane(rng, 5, 5);
    ImagePlane dx, dy;
    testing::reference_grad(p, dx, dy);
    const auto g = grad(p);
    EXPECT_EQ(g.dx, dx);
    EXPECT_EQ(g.dy, dy);
    for (std::size_t r = 0; r < 5; ++r) EXPECT_EQ(g.dx(r, 4), 0.0);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(g.dy(4, c), 0.0);
}

TEST(Div, ZeroFieldGivesZero) {
    const GradientPair<double> g{ImagePlane(3, 3), ImagePlane(3, 3)};
    const ImagePlane d = div(g);
    for (double v : d.values()) EXPECT_EQ(v, 0.0);
}

TEST(Div, AdjointIdentityOnRandomPairs) {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const ImagePlane p = testing::random_plane(rng, 7, 6, -1.0, 1.0);
        const GradientPair<double> g{testing::random_plane(rng, 7, 6, -1.0, 1.0),
                                     testing::random_plane(rng, 7, 6, -1.0, 1.0)};
        const auto gp = grad(p);
        const double lhs = dot(gp.dx, g.dx) + dot(gp.dy, g.dy);
        const double rhs = -dot(p, div(g));
        ASSERT_NEAR(lhs, rhs, 1e-10) << "trial " << trial;
    }
}

TEST(Div, DivGradIsNeumannLaplacian) {
    Rng rng(3);
    const ImagePlane p = testing::random_plane(rng, 6, 8);
    const ImagePlane lap = div(grad(p));
    const ImagePlane ref = testing::reference_laplacian(p);
    EXPECT_LE(testing::max_abs_diff(lap, ref), 1e-14);
    const ImagePlane normal = apply_gradient_normal(p);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(normal[i], -ref[i], 1e-14);
}

TEST(Operators, ShiftEquivariantAwayFromBoundary) {
    Rng rng(4);
    const ImagePlane p = testing::random_plane(rng, 8, 8);
    ImagePlane shifted(8, 8);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 1; c < 8; ++c) shifted(r, c) = p(r, c - 1);
    const ImagePlane lp = apply_gradient_normal(p), ls = apply_gradient_normal(shifted);
    const ImagePlane gp = log_potential_grad(p, 5.0), gs = log_potential_grad(shifted, 5.0);
    for (std::size_t r = 1; r + 1 < 8; ++r) {
        for (std::size_t c = 2; c + 1 < 8; ++c) {
            EXPECT_NEAR(ls(r, c), lp(r, c - 1), 1e-14);
            EXPECT_NEAR(gs(r, c), gp(r, c - 1), 1e-13);
        }
    }
}

TEST(ProjectBox, ClampsAndIsIdempotent) {
    ImagePlane p(1, 3, {-0.2, 0.4, 1.5});
    const ImagePlane q = project_box(p, 0.0, 1.0);
    EXPECT_EQ(q[0], 0.0);
    EXPECT_EQ(q[1], 0.4);
    EXPECT_EQ(q[2], 1.0);

    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const ImagePlane x = testing::random_plane(rng, 5, 5, -1.0, 2.0);
        const ImagePlane hi = testing::random_plane(rng, 5, 5);
        const ImagePlane once = project_box(x, 0.0, hi);
        EXPECT_EQ(project_box(once, 0.0, hi), once);
        const ImagePlane inside = project_box(testing::random_plane(rng, 5, 5), 0.0, 1.0);
        EXPECT_EQ(project_box(inside, 0.0, 1.0), inside);
    }
}

TEST(ProjectBox, BoundShapeMismatchThrows) {
    EXPECT_THROW(project_box(ImagePlane(2, 2), 0.0, ImagePlane(2, 3)), ShapeError);
}

TEST(LogPotential, ZeroAndUnitCases) {
    GradientPair<double> g{ImagePlane(3, 3), ImagePlane(3, 3)};
    EXPECT_EQ(log_potential(g, 10.0), 0.0);
    g.dx[4] = 1.0;
    EXPECT_NEAR(log_potential(g, 1.0), std::log(2.0), 1e-15);
}

TEST(LogPotential, MatchesLoopOracle) {
    Rng rng(6);
    const GradientPair<double> g{testing::random_plane(rng, 6, 7, -1.0, 1.0),
                                 testing::random_plane(rng, 6, 7, -1.0, 1.0)};
    EXPECT_NEAR(log_potential(g, 10.0), testing::reference_log_potential(g.dx, g.dy, 10.0), 1e-12);
}

TEST(LogPotential, RejectsNonPositiveTheta) {
    const GradientPair<double> g{ImagePlane(2, 2), ImagePlane(2, 2)};
    EXPECT_THROW(log_potential(g, 0.0), InvariantError);
    EXPECT_THROW(log_potential_grad(ImagePlane(2, 2), -1.0), InvariantError);
}

TEST(LogPotentialGrad, FlatPlaneHasZeroGradient) {
    const ImagePlane g = log_potential_grad(ImagePlane(4, 4, 0.7), 10.0);
    for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(LogPotentialGrad, MatchesFiniteDifferences) {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const ImagePlane r = testing::random_plane(rng, 6, 6);
        const double theta = 10.0;
        const ImagePlane analytic = log_potential_grad(r, theta);
        const ImagePlane fd = testing::finite_difference_gradient(r, [&](const ImagePlane& x) {
            ImagePlane dx, dy;
            testing::reference_grad(x, dx, dy);
            return testing::reference_log_potential(dx, dy, theta);
        });
        ASSERT_LE(testing::relative_error(analytic, fd), 1e-5) << "trial " << trial;
    }
}

TEST(LogPotentialGrad, VanishesAsThetaGoesToZero) {
    Rng rng(8);
    const ImagePlane r = testing::random_plane(rng, 5, 5);
    EXPECT_LE(testing::max_abs(log_potential_grad(r, 1e-12)), 1e-10);
}

}  // namespace
}  // namespace retinex
