#include "kvn/grid.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace kvn;

namespace {

PhaseSpaceGrid grid_1d(int levels, double x_min, double extent, double hbar = 1.0) {
    return build_grid({{"x", levels, x_min, extent}}, hbar);
}

}  // namespace

TEST(Grid, SpacingsAndMomentumStep) {
    const auto g = grid_1d(16, 0.0, two_pi);
    EXPECT_DOUBLE_EQ(g.dx(0), two_pi / 16.0);
    EXPECT_DOUBLE_EQ(g.dp(0), 1.0);  // dp = 2*pi*hbar / X_max
    const auto& P = g.momentum_grid(0);
    EXPECT_DOUBLE_EQ(*std::min_element(P.begin(), P.end()), -8.0);
    EXPECT_DOUBLE_EQ(*std::max_element(P.begin(), P.end()), 7.0);  // range [-8, 8)
}

TEST(Grid, UncertaintyProductIdentity) {
    const auto g = grid_1d(64, 0.0, two_pi);
    EXPECT_DOUBLE_EQ(g.dx(0) * g.dp(0), two_pi / 64.0);  // dx*dp = h/L
}

TEST(Grid, StateCountAndQubits) {
    const auto g = build_grid({{"q", 32, -5.0, 10.0}, {"p", 32, -5.0, 10.0}});
    EXPECT_EQ(g.size(), 1024u);
    EXPECT_EQ(g.qubit_count(), 10);
    const auto g3 = build_grid({{"x", 12, 0.0, 1.0}});
    EXPECT_EQ(g3.qubit_count(), -1);  // not a power of two
}

TEST(Grid, CoordinatesOf) {
    const auto g = grid_1d(16, 0.0, two_pi);
    EXPECT_DOUBLE_EQ(g.coordinates_of(0)[0], 0.0);
    EXPECT_DOUBLE_EQ(g.coordinates_of(8)[0], pi);

    const auto g2 = build_grid({{"a", 4, 0.0, 4.0}, {"b", 4, 0.0, 4.0}});
    const auto x = g2.coordinates_of(5);  // row-major: 5 = 1*4 + 1
    EXPECT_DOUBLE_EQ(x[0], 1.0);
    EXPECT_DOUBLE_EQ(x[1], 1.0);
}

TEST(Grid, MomentumOrdering) {
    const auto g = grid_1d(4, 0.0, two_pi);
    const auto& P = g.momentum_grid(0);
    ASSERT_EQ(P.size(), 4u);
    EXPECT_DOUBLE_EQ(P[0], 0.0);
    EXPECT_DOUBLE_EQ(P[1], 1.0);
    EXPECT_DOUBLE_EQ(P[2], -2.0);
    EXPECT_DOUBLE_EQ(P[3], -1.0);

    const auto g8 = grid_1d(8, 0.0, 2.0 * two_pi);
    EXPECT_DOUBLE_EQ(g8.dp(0), 0.5);
    double max_abs = 0;
    for (double p : g8.momentum_grid(0)) max_abs = std::max(max_abs, std::abs(p));
    EXPECT_DOUBLE_EQ(max_abs, 2.0);

    const auto gh = grid_1d(16, 0.0, two_pi, 2.0);
    EXPECT_DOUBLE_EQ(gh.dp(0), 2.0);  // dp scales with hbar
}

TEST(Grid, ExactDualityOnEveryAxis) {
    const auto g = build_grid({{"q", 48, -3.0, 7.5}, {"p", 20, -1.0, 2.25}}, 0.7);
    for (int j = 0; j < g.dim(); ++j)
        EXPECT_DOUBLE_EQ(g.dx(j) * g.dp(j) * g.axis(j).levels, g.planck());
}

TEST(Grid, IndexRoundTrip) {
    const auto g = build_grid({{"q", 8, -2.0, 4.0}, {"p", 6, 0.0, 3.0}, {"r", 4, 1.0, 2.0}});
    for (std::size_t i = 0; i < g.size(); ++i)
        EXPECT_EQ(g.index_of_point(g.coordinates_of(i)), i);
}

TEST(Grid, MomentumSumConvention) {
    // Even L: symmetric frequencies cancel, leaving only the unpaired Nyquist
    // mode at -L/2 * dp. Odd L sums to zero outright.
    const auto ge = grid_1d(16, 0.0, two_pi);
    double sum = 0;
    for (double p : ge.momentum_grid(0)) sum += p;
    EXPECT_DOUBLE_EQ(sum, -8.0);

    const auto go = grid_1d(9, 0.0, two_pi);
    sum = 0;
    for (double p : go.momentum_grid(0)) sum += p;
    EXPECT_DOUBLE_EQ(sum, 0.0);
}

TEST(Grid, WrapHelpers) {
    const auto g = grid_1d(16, -1.0, 2.0);
    Eigen::VectorXd x(1);
    x << 1.25;  // outside [-1, 1)
    EXPECT_NEAR(g.wrap_point(x)[0], -0.75, 1e-15);
    EXPECT_NEAR(g.wrap_delta(0, -0.9, 0.9), 0.2, 1e-15);
}

TEST(Grid, RejectsBadInput) {
    EXPECT_THROW(grid_1d(3, 0.0, 1.0), std::invalid_argument);
    EXPECT_THROW(grid_1d(8, 0.0, -1.0), std::invalid_argument);
    EXPECT_THROW(grid_1d(8, 0.0, 1.0, 0.0), std::invalid_argument);
    EXPECT_THROW(build_grid({}), std::invalid_argument);
    const auto g = grid_1d(8, 0.0, 1.0);
    EXPECT_THROW(g.coordinates_of(8), std::out_of_range);
    EXPECT_THROW(g.momentum_grid(1), std::out_of_range);
}
