#include <gtest/gtest.h>

#include <cmath>

#include "freeform/error.hpp"
#include "freeform/expression.hpp"

using namespace freeform;

TEST(Expression, EvaluatesArithmetic) {
  const Expression e = Expression::parse("1 + 2*x1 - x2/4 + x1^2");
  EXPECT_DOUBLE_EQ(e({3.0, 8.0}), 1.0 + 6.0 - 2.0 + 9.0);
}

TEST(Expression, PowerIsRightAssociativeAndBindsTighterThanMinus) {
  EXPECT_DOUBLE_EQ(Expression::parse("2^3^2")({0, 0}), 512.0);
  EXPECT_DOUBLE_EQ(Expression::parse("-x1^2")({3, 0}), -9.0);
}

TEST(Expression, Functions) {
  const Expression e = Expression::parse("sqrt(x1) + sin(pi/2) + cos(0) + exp(0) + log(1)");
  EXPECT_DOUBLE_EQ(e({4.0, 0.0}), 2.0 + 1.0 + 1.0 + 1.0);
}

TEST(Expression, SymbolicDerivativeMatchesFiniteDifference) {
  const Expression e = Expression::parse("x1 + 0.1*sin(x1) + sqrt(1 + x1^2 + x2^2) * x2");
  const Vec2 p{0.3, -0.7};
  const double h = 1e-6;
  for (int i = 0; i < 2; ++i) {
    const Vec2 dx = i == 0 ? Vec2{h, 0} : Vec2{0, h};
    const double fd = (e(p + dx) - e(p - dx)) / (2 * h);
    EXPECT_NEAR(e.derivative(i)(p), fd, 1e-8);
  }
}

TEST(Expression, HessianIsSymmetric) {
  const DifferentiableExpression e(Expression::parse("x1^3*x2 + exp(x1*x2)"));
  const Mat2 H = e.hessian({0.4, 0.9});
  EXPECT_DOUBLE_EQ(H(0, 1), H(1, 0));
  EXPECT_NEAR(H(0, 0), 6 * 0.4 * 0.9 + 0.81 * std::exp(0.36), 1e-12);
}

TEST(Expression, ConstantFolding) {
  EXPECT_TRUE(Expression::parse("2*3 + 1").is_constant());
  EXPECT_TRUE(Expression::parse("x1^2").derivative(1).is_constant());
}

TEST(Expression, ErrorsReportColumn) {
  try {
    Expression::parse("x1 + foo(2)");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    EXPECT_NE(std::string(e.what()).find("column 6"), std::string::npos);
  }
  EXPECT_THROW(Expression::parse("(x1"), Error);
  EXPECT_THROW(Expression::parse("x1 x2"), Error);
  EXPECT_THROW(Expression::parse(""), Error);
}
