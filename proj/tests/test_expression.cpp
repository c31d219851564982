#include "kvn/expression.hpp"

#include <gtest/gtest.h>

#include <cmath>

using kvn::Expression;

namespace {
Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
    int i = 0;
    for (double d : v) x[i++] = d;
    return x;
}
}  // namespace

TEST(Expression, Arithmetic) {
    const auto e = Expression::parse("2*x1 + 3/x2 - 1", 2);
    EXPECT_DOUBLE_EQ(e(vec({2.0, 3.0}), 0.0), 4.0 + 1.0 - 1.0);
}

TEST(Expression, PowerRightAssociative) {
    const auto e = Expression::parse("2^3^2", 1);
    EXPECT_DOUBLE_EQ(e(vec({0.0}), 0.0), 512.0);  // 2^(3^2)
}

TEST(Expression, FunctionsAndTime) {
    const auto e = Expression::parse("sin(x1)*cos(t) + exp(-x1^2) + tanh(x1)", 1);
    const double x = 0.7, t = 0.3;
    EXPECT_NEAR(e(vec({x}), t),
                std::sin(x) * std::cos(t) + std::exp(-x * x) + std::tanh(x), 1e-15);
}

TEST(Expression, UnaryMinusChain) {
    const auto e = Expression::parse("--x1 - -2", 1);
    EXPECT_DOUBLE_EQ(e(vec({5.0}), 0.0), 7.0);
}

TEST(Expression, Errors) {
    EXPECT_THROW(Expression::parse("x3", 2), std::invalid_argument);
    EXPECT_THROW(Expression::parse("foo(x1)", 1), std::invalid_argument);
    EXPECT_THROW(Expression::parse("1 +", 1), std::invalid_argument);
    EXPECT_THROW(Expression::parse("(x1", 1), std::invalid_argument);
    EXPECT_THROW(Expression::parse("x1 x1", 1), std::invalid_argument);
    try {
        Expression::parse("x1 + @", 1);
        FAIL() << "expected parse error";
    } catch (const std::invalid_argument& err) {
        EXPECT_NE(std::string(err.what()).find("position"), std::string::npos);
    }
}
