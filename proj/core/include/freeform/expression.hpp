#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "freeform/vec.hpp"

namespace freeform {

/// Scalar expression in x1, x2 over a fixed grammar:
///   numbers, pi, x1, x2, + - * / ^, parentheses, sqrt sin cos exp log.
/// Immutable; copies share the tree. Derivatives are symbolic.
class Expression {
 public:
  struct Node;

  /// Throws Error(ConfigError) with the offending column on malformed input.
  static Expression parse(std::string_view text);
  static Expression constant(double value);
  static Expression variable(int index);

  double operator()(const Vec2& x) const;
  /// d/dx_{index+1}
  Expression derivative(int index) const;
  Vec2 gradient(const Vec2& x) const;
  std::string str() const;
  bool is_constant() const;

 private:
  explicit Expression(std::shared_ptr<const Node> root) : root_(std::move(root)) {}
  std::shared_ptr<const Node> root_;

  friend Expression operator+(const Expression&, const Expression&);
  friend Expression operator-(const Expression&, const Expression&);
  friend Expression operator*(const Expression&, const Expression&);
  friend Expression operator/(const Expression&, const Expression&);
  friend Expression pow(const Expression&, const Expression&);
  friend Expression operator-(const Expression&);
};

Expression operator+(const Expression& a, const Expression& b);
Expression operator-(const Expression& a, const Expression& b);
Expression operator*(const Expression& a, const Expression& b);
Expression operator/(const Expression& a, const Expression& b);
Expression pow(const Expression& a, const Expression& b);
Expression operator-(const Expression& a);

/// Expression with cached first and second partial derivatives.
class DifferentiableExpression {
 public:
  explicit DifferentiableExpression(Expression e);
  double value(const Vec2& x) const { return f_(x); }
  Vec2 gradient(const Vec2& x) const { return {d1_(x), d2_(x)}; }
  Mat2 hessian(const Vec2& x) const;
  const Expression& expression() const { return f_; }

 private:
  Expression f_;
  Expression d1_, d2_;
  Expression d11_, d12_, d22_;
};

}  // namespace freeform
