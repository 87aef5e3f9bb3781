#include "freeform/expression.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "freeform/error.hpp"

namespace freeform {

enum class Op { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Sqrt, Sin, Cos, Exp, Log };

struct Expression::Node {
  Op op = Op::Const;
  double value = 0.0;
  int var = 0;
  std::shared_ptr<const Node> a;
  std::shared_ptr<const Node> b;
};

using NodePtr = std::shared_ptr<const Expression::Node>;

namespace {

NodePtr make_const(double v) {
  auto n = std::make_shared<Expression::Node>();
  n->op = Op::Const;
  n->value = v;
  return n;
}

NodePtr make_var(int i) {
  auto n = std::make_shared<Expression::Node>();
  n->op = Op::Var;
  n->var = i;
  return n;
}

bool is_const(const NodePtr& n, double v) { return n->op == Op::Const && n->value == v; }

double eval(const Expression::Node& n, const Vec2& x);

NodePtr make(Op op, NodePtr a, NodePtr b = nullptr) {
  // Constant folding plus the 0/1 identities; keeps derivative trees small.
  const bool ca = a && a->op == Op::Const;
  const bool cb = !b || b->op == Op::Const;
  if (ca && cb) {
    Expression::Node tmp;
    tmp.op = op;
    tmp.a = a;
    tmp.b = b;
    return make_const(eval(tmp, {}));
  }
  switch (op) {
    case Op::Add:
      if (is_const(a, 0.0)) return b;
      if (is_const(b, 0.0)) return a;
      break;
    case Op::Sub:
      if (is_const(b, 0.0)) return a;
      if (is_const(a, 0.0)) return make(Op::Neg, b);
      break;
    case Op::Mul:
      if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
      if (is_const(a, 1.0)) return b;
      if (is_const(b, 1.0)) return a;
      break;
    case Op::Div:
      if (is_const(a, 0.0)) return make_const(0.0);
      if (is_const(b, 1.0)) return a;
      break;
    case Op::Pow:
      if (is_const(b, 0.0)) return make_const(1.0);
      if (is_const(b, 1.0)) return a;
      break;
    default:
      break;
  }
  auto n = std::make_shared<Expression::Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

double eval(const Expression::Node& n, const Vec2& x) {
  switch (n.op) {
    case Op::Const: return n.value;
    case Op::Var: return n.var == 0 ? x.x1 : x.x2;
    case Op::Add: return eval(*n.a, x) + eval(*n.b, x);
    case Op::Sub: return eval(*n.a, x) - eval(*n.b, x);
    case Op::Mul: return eval(*n.a, x) * eval(*n.b, x);
    case Op::Div: return eval(*n.a, x) / eval(*n.b, x);
    case Op::Pow: {
      const double e = eval(*n.b, x);
      if (n.b->op == Op::Const && e == 2.0) {
        const double base = eval(*n.a, x);
        return base * base;
      }
      return std::pow(eval(*n.a, x), e);
    }
    case Op::Neg: return -eval(*n.a, x);
    case Op::Sqrt: return std::sqrt(eval(*n.a, x));
    case Op::Sin: return std::sin(eval(*n.a, x));
    case Op::Cos: return std::cos(eval(*n.a, x));
    case Op::Exp: return std::exp(eval(*n.a, x));
    case Op::Log: return std::log(eval(*n.a, x));
  }
  return 0.0;
}

NodePtr diff(const NodePtr& n, int var) {
  const auto& a = n->a;
  const auto& b = n->b;
  switch (n->op) {
    case Op::Const: return make_const(0.0);
    case Op::Var: return make_const(n->var == var ? 1.0 : 0.0);
    case Op::Add: return make(Op::Add, diff(a, var), diff(b, var));
    case Op::Sub: return make(Op::Sub, diff(a, var), diff(b, var));
    case Op::Mul:
      return make(Op::Add, make(Op::Mul, diff(a, var), b), make(Op::Mul, a, diff(b, var)));
    case Op::Div:
      return make(Op::Div,
                  make(Op::Sub, make(Op::Mul, diff(a, var), b), make(Op::Mul, a, diff(b, var))),
                  make(Op::Mul, b, b));
    case Op::Pow: {
      if (b->op == Op::Const) {
        // d(a^c) = c a^(c-1) a'
        return make(Op::Mul, make(Op::Mul, b, make(Op::Pow, a, make_const(b->value - 1.0))),
                    diff(a, var));
      }
      // d(a^b) = a^b (b' ln a + b a'/a)
      return make(Op::Mul, n,
                  make(Op::Add, make(Op::Mul, diff(b, var), make(Op::Log, a)),
                       make(Op::Div, make(Op::Mul, b, diff(a, var)), a)));
    }
    case Op::Neg: return make(Op::Neg, diff(a, var));
    case Op::Sqrt:
      return make(Op::Div, diff(a, var), make(Op::Mul, make_const(2.0), n));
    case Op::Sin: return make(Op::Mul, make(Op::Cos, a), diff(a, var));
    case Op::Cos: return make(Op::Neg, make(Op::Mul, make(Op::Sin, a), diff(a, var)));
    case Op::Exp: return make(Op::Mul, n, diff(a, var));
    case Op::Log: return make(Op::Div, diff(a, var), a);
  }
  return make_const(0.0);
}

void print(const NodePtr& n, std::ostringstream& os) {
  auto bin = [&](const char* sym) {
    os << '(';
    print(n->a, os);
    os << sym;
    print(n->b, os);
    os << ')';
  };
  auto fn = [&](const char* name) {
    os << name << '(';
    print(n->a, os);
    os << ')';
  };
  switch (n->op) {
    case Op::Const: os << n->value; break;
    case Op::Var: os << (n->var == 0 ? "x1" : "x2"); break;
    case Op::Add: bin("+"); break;
    case Op::Sub: bin("-"); break;
    case Op::Mul: bin("*"); break;
    case Op::Div: bin("/"); break;
    case Op::Pow: bin("^"); break;
    case Op::Neg: os << "(-"; print(n->a, os); os << ')'; break;
    case Op::Sqrt: fn("sqrt"); break;
    case Op::Sin: fn("sin"); break;
    case Op::Cos: fn("cos"); break;
    case Op::Exp: fn("exp"); break;
    case Op::Log: fn("log"); break;
  }
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  NodePtr parse() {
    NodePtr n = expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::ConfigError, "expression '" + std::string(text_) + "' column " +
                                            std::to_string(pos_ + 1) + ": " + what);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    NodePtr n = term();
    while (true) {
      if (accept('+')) {
        n = make(Op::Add, n, term());
      } else if (accept('-')) {
        n = make(Op::Sub, n, term());
      } else {
        return n;
      }
    }
  }

  NodePtr term() {
    NodePtr n = unary();
    while (true) {
      if (accept('*')) {
        n = make(Op::Mul, n, unary());
      } else if (accept('/')) {
        n = make(Op::Div, n, unary());
      } else {
        return n;
      }
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Op::Neg, unary());
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return make(Op::Pow, base, unary());
    return base;
  }

  NodePtr primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr n = expr();
      if (!accept(')')) fail("expected ')'");
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double v = 0.0;
      const char* first = text_.data() + pos_;
      const char* last = text_.data() + text_.size();
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc()) fail("malformed number");
      pos_ += static_cast<std::size_t>(ptr - first);
      return make_const(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      const std::string_view name = text_.substr(start, pos_ - start);
      if (name == "x1") return make_var(0);
      if (name == "x2") return make_var(1);
      if (name == "pi") return make_const(std::numbers::pi);
      Op op;
      if (name == "sqrt") {
        op = Op::Sqrt;
      } else if (name == "sin") {
        op = Op::Sin;
      } else if (name == "cos") {
        op = Op::Cos;
      } else if (name == "exp") {
        op = Op::Exp;
      } else if (name == "log") {
        op = Op::Log;
      } else {
        pos_ = start;
        fail("unknown identifier '" + std::string(name) + "'");
      }
      if (!accept('(')) fail("expected '(' after function name");
      NodePtr arg = expr();
      if (!accept(')')) fail("expected ')'");
      return make(op, arg);
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression Expression::parse(std::string_view text) { return Expression(Parser(text).parse()); }
Expression Expression::constant(double value) { return Expression(make_const(value)); }
Expression Expression::variable(int index) { return Expression(make_var(index)); }

double Expression::operator()(const Vec2& x) const { return eval(*root_, x); }
Expression Expression::derivative(int index) const { return Expression(diff(root_, index)); }
Vec2 Expression::gradient(const Vec2& x) const {
  return {derivative(0)(x), derivative(1)(x)};
}
bool Expression::is_constant() const { return root_->op == Op::Const; }

std::string Expression::str() const {
  std::ostringstream os;
  os.precision(17);
  print(root_, os);
  return os.str();
}

Expression operator+(const Expression& a, const Expression& b) {
  return Expression(make(Op::Add, a.root_, b.root_));
}
Expression operator-(const Expression& a, const Expression& b) {
  return Expression(make(Op::Sub, a.root_, b.root_));
}
Expression operator*(const Expression& a, const Expression& b) {
  return Expression(make(Op::Mul, a.root_, b.root_));
}
Expression operator/(const Expression& a, const Expression& b) {
  return Expression(make(Op::Div, a.root_, b.root_));
}
Expression pow(const Expression& a, const Expression& b) {
  return Expression(make(Op::Pow, a.root_, b.root_));
}
Expression operator-(const Expression& a) { return Expression(make(Op::Neg, a.root_)); }

DifferentiableExpression::DifferentiableExpression(Expression e)
    : f_(std::move(e)),
      d1_(f_.derivative(0)),
      d2_(f_.derivative(1)),
      d11_(d1_.derivative(0)),
      d12_(d1_.derivative(1)),
      d22_(d2_.derivative(1)) {}

Mat2 DifferentiableExpression::hessian(const Vec2& x) const {
  Mat2 h;
  h(0, 0) = d11_(x);
  h(0, 1) = d12_(x);
  h(1, 0) = h(0, 1);
  h(1, 1) = d22_(x);
  return h;
}

}  // namespace freeform
