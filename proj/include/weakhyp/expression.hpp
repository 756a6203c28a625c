#pragma once

// Arithmetic expressions over x1..xn and t, with exact symbolic derivatives.
//
// Grammar (precedence low to high):
//   sum     := product (('+' | '-') product)*
//   product := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?          right associative
//   primary := number | 'pi' | 'x'k | 't' | name '(' args ')' | '(' sum ')'
// Functions: sin cos exp log sqrt abs sign, and lacunary(s, arg), the
// truncated Weierstrass-type series  sum_j 2^(-j s) cos(2^j arg)  whose
// truncation follows the band limit of the grid it is sampled on.

#include <cctype>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "weakhyp/errors.hpp"

namespace weakhyp::expr {

enum class Op {
  Const, Var, Time,
  Add, Sub, Mul, Div, Pow, Neg,
  Sin, Cos, Exp, Log, Sqrt, Abs, Sign,
  Lacunary
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Op op = Op::Const;
  double value = 0.0;  // Const: the constant. Lacunary: decay exponent s.
  int index = 0;       // Var: axis (0-based). Lacunary: derivative count.
  NodePtr lhs, rhs;    // unary ops use lhs only
};

// Sampling context: coordinates of every point plus time and band limit.
struct EvalContext {
  std::vector<std::span<const double>> coords;
  std::size_t size = 1;
  double t = 0.0;
  // Largest argument frequency retained by lacunary series.
  double band_limit = 1024.0;
};

namespace detail {

inline NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  return n;
}

inline bool is_const(const NodePtr& n) { return n->op == Op::Const; }
inline bool is_const(const NodePtr& n, double v) { return n->op == Op::Const && n->value == v; }

}  // namespace detail

inline NodePtr constant(double v) {
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->value = v;
  return n;
}

inline NodePtr variable(int axis) {
  auto n = std::make_shared<Node>();
  n->op = Op::Var;
  n->index = axis;
  return n;
}

inline NodePtr time_variable() { return detail::make(Op::Time); }

// Smart constructors fold constants and drop neutral elements so derivative
// trees stay small.
inline NodePtr add(NodePtr a, NodePtr b) {
  using detail::is_const;
  if (is_const(a) && is_const(b)) return constant(a->value + b->value);
  if (is_const(a, 0.0)) return b;
  if (is_const(b, 0.0)) return a;
  return detail::make(Op::Add, std::move(a), std::move(b));
}

inline NodePtr neg(NodePtr a) {
  if (detail::is_const(a)) return constant(-a->value);
  if (a->op == Op::Neg) return a->lhs;
  return detail::make(Op::Neg, std::move(a));
}

inline NodePtr sub(NodePtr a, NodePtr b) {
  using detail::is_const;
  if (is_const(a) && is_const(b)) return constant(a->value - b->value);
  if (is_const(b, 0.0)) return a;
  if (is_const(a, 0.0)) return neg(std::move(b));
  return detail::make(Op::Sub, std::move(a), std::move(b));
}

inline NodePtr mul(NodePtr a, NodePtr b) {
  using detail::is_const;
  if (is_const(a) && is_const(b)) return constant(a->value * b->value);
  if (is_const(a, 0.0) || is_const(b, 0.0)) return constant(0.0);
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  if (is_const(a, -1.0)) return neg(std::move(b));
  if (is_const(b, -1.0)) return neg(std::move(a));
  return detail::make(Op::Mul, std::move(a), std::move(b));
}

inline NodePtr div(NodePtr a, NodePtr b) {
  using detail::is_const;
  if (is_const(a) && is_const(b)) return constant(a->value / b->value);
  if (is_const(a, 0.0)) return constant(0.0);
  if (is_const(b, 1.0)) return a;
  return detail::make(Op::Div, std::move(a), std::move(b));
}

inline NodePtr pow(NodePtr a, NodePtr b) {
  using detail::is_const;
  if (is_const(a) && is_const(b)) return constant(std::pow(a->value, b->value));
  if (is_const(b, 0.0)) return constant(1.0);
  if (is_const(b, 1.0)) return a;
  return detail::make(Op::Pow, std::move(a), std::move(b));
}

inline NodePtr apply(Op f, NodePtr a) {
  if (detail::is_const(a)) {
    const double v = a->value;
    switch (f) {
      case Op::Sin: return constant(std::sin(v));
      case Op::Cos: return constant(std::cos(v));
      case Op::Exp: return constant(std::exp(v));
      case Op::Log: return constant(std::log(v));
      case Op::Sqrt: return constant(std::sqrt(v));
      case Op::Abs: return constant(std::abs(v));
      case Op::Sign: return constant(v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0));
      default: break;
    }
  }
  return detail::make(f, std::move(a));
}

inline NodePtr lacunary(double s, int derivative, NodePtr arg) {
  auto n = std::make_shared<Node>();
  n->op = Op::Lacunary;
  n->value = s;
  n->index = derivative;
  n->lhs = std::move(arg);
  return n;
}

// d/dx_axis. Pass axis = -1 for d/dt.
inline NodePtr derivative(const NodePtr& e, int axis) {
  const auto d = [axis](const NodePtr& n) { return derivative(n, axis); };
  switch (e->op) {
    case Op::Const: return constant(0.0);
    case Op::Var: return constant(axis >= 0 && e->index == axis ? 1.0 : 0.0);
    case Op::Time: return constant(axis < 0 ? 1.0 : 0.0);
    case Op::Add: return add(d(e->lhs), d(e->rhs));
    case Op::Sub: return sub(d(e->lhs), d(e->rhs));
    case Op::Neg: return neg(d(e->lhs));
    case Op::Mul: return add(mul(d(e->lhs), e->rhs), mul(e->lhs, d(e->rhs)));
    case Op::Div:
      return div(sub(mul(d(e->lhs), e->rhs), mul(e->lhs, d(e->rhs))), mul(e->rhs, e->rhs));
    case Op::Pow: {
      const NodePtr& u = e->lhs;
      const NodePtr& v = e->rhs;
      const NodePtr dv = d(v);
      if (detail::is_const(dv, 0.0)) {
        // v u^(v-1) u'
        return mul(mul(v, pow(u, sub(v, constant(1.0)))), d(u));
      }
      // u^v (v' log u + v u'/u)
      return mul(e, add(mul(dv, apply(Op::Log, u)), div(mul(v, d(u)), u)));
    }
    case Op::Sin: return mul(apply(Op::Cos, e->lhs), d(e->lhs));
    case Op::Cos: return neg(mul(apply(Op::Sin, e->lhs), d(e->lhs)));
    case Op::Exp: return mul(e, d(e->lhs));
    case Op::Log: return div(d(e->lhs), e->lhs);
    case Op::Sqrt: return div(d(e->lhs), mul(constant(2.0), e));
    case Op::Abs: return mul(apply(Op::Sign, e->lhs), d(e->lhs));
    case Op::Sign: return constant(0.0);
    case Op::Lacunary:
      return mul(lacunary(e->value, e->index + 1, e->lhs), d(e->lhs));
  }
  return constant(0.0);
}

inline bool depends_on_time(const NodePtr& e) {
  if (!e) return false;
  if (e->op == Op::Time) return true;
  return depends_on_time(e->lhs) || depends_on_time(e->rhs);
}

inline int max_axis(const NodePtr& e) {
  if (!e) return -1;
  int m = e->op == Op::Var ? e->index : -1;
  return std::max({m, max_axis(e->lhs), max_axis(e->rhs)});
}

// Evaluates e at every point of the context.
inline std::vector<double> evaluate(const NodePtr& e, const EvalContext& ctx) {
  const std::size_t size = ctx.size;
  std::vector<double> out(size);
  switch (e->op) {
    case Op::Const:
      std::fill(out.begin(), out.end(), e->value);
      return out;
    case Op::Var: {
      if (e->index >= static_cast<int>(ctx.coords.size())) {
        throw ArgumentError("expression uses x" + std::to_string(e->index + 1) +
                            " beyond the grid dimension");
      }
      const auto c = ctx.coords[e->index];
      std::copy(c.begin(), c.end(), out.begin());
      return out;
    }
    case Op::Time:
      std::fill(out.begin(), out.end(), ctx.t);
      return out;
    default: break;
  }

  std::vector<double> a = evaluate(e->lhs, ctx);
  if (e->rhs) {
    const std::vector<double> b = evaluate(e->rhs, ctx);
    switch (e->op) {
      case Op::Add: for (std::size_t i = 0; i < size; ++i) out[i] = a[i] + b[i]; break;
      case Op::Sub: for (std::size_t i = 0; i < size; ++i) out[i] = a[i] - b[i]; break;
      case Op::Mul: for (std::size_t i = 0; i < size; ++i) out[i] = a[i] * b[i]; break;
      case Op::Div: for (std::size_t i = 0; i < size; ++i) out[i] = a[i] / b[i]; break;
      case Op::Pow:
        for (std::size_t i = 0; i < size; ++i) {
          // Integer powers keep negative bases usable (x1^2 with x1 < 0).
          const double p = b[i];
          out[i] = (p == std::round(p) && std::abs(p) < 64) ? std::pow(a[i], static_cast<int>(p))
                                                           : std::pow(a[i], p);
        }
        break;
      default: break;
    }
    return out;
  }

  switch (e->op) {
    case Op::Neg: for (std::size_t i = 0; i < size; ++i) out[i] = -a[i]; break;
    case Op::Sin: for (std::size_t i = 0; i < size; ++i) out[i] = std::sin(a[i]); break;
    case Op::Cos: for (std::size_t i = 0; i < size; ++i) out[i] = std::cos(a[i]); break;
    case Op::Exp: for (std::size_t i = 0; i < size; ++i) out[i] = std::exp(a[i]); break;
    case Op::Log: for (std::size_t i = 0; i < size; ++i) out[i] = std::log(a[i]); break;
    case Op::Sqrt: for (std::size_t i = 0; i < size; ++i) out[i] = std::sqrt(a[i]); break;
    case Op::Abs: for (std::size_t i = 0; i < size; ++i) out[i] = std::abs(a[i]); break;
    case Op::Sign:
      for (std::size_t i = 0; i < size; ++i) out[i] = a[i] > 0 ? 1.0 : (a[i] < 0 ? -1.0 : 0.0);
      break;
    case Op::Lacunary: {
      std::fill(out.begin(), out.end(), 0.0);
      const double shift = e->index * std::numbers::pi / 2;
      for (int j = 0; std::ldexp(1.0, j) <= ctx.band_limit && j < 60; ++j) {
        const double freq = std::ldexp(1.0, j);
        const double weight = std::pow(freq, e->index - e->value);
        for (std::size_t i = 0; i < size; ++i) out[i] += weight * std::cos(freq * a[i] + shift);
      }
      break;
    }
    default: break;
  }
  return out;
}

// Scalar convenience evaluation at a single point.
inline double evaluate_at(const NodePtr& e, std::span<const double> x, double t = 0.0,
                          double band_limit = 1024.0) {
  EvalContext ctx;
  ctx.size = 1;
  ctx.t = t;
  ctx.band_limit = band_limit;
  for (const double& xi : x) ctx.coords.emplace_back(&xi, 1);
  return evaluate(e, ctx)[0];
}

inline std::string to_string(const NodePtr& e) {
  std::ostringstream os;
  os.precision(17);
  switch (e->op) {
    case Op::Const: os << e->value; break;
    case Op::Var: os << 'x' << e->index + 1; break;
    case Op::Time: os << 't'; break;
    case Op::Add: os << '(' << to_string(e->lhs) << " + " << to_string(e->rhs) << ')'; break;
    case Op::Sub: os << '(' << to_string(e->lhs) << " - " << to_string(e->rhs) << ')'; break;
    case Op::Mul: os << '(' << to_string(e->lhs) << " * " << to_string(e->rhs) << ')'; break;
    case Op::Div: os << '(' << to_string(e->lhs) << " / " << to_string(e->rhs) << ')'; break;
    case Op::Pow: os << '(' << to_string(e->lhs) << " ^ " << to_string(e->rhs) << ')'; break;
    case Op::Neg: os << "(-" << to_string(e->lhs) << ')'; break;
    case Op::Sin: os << "sin(" << to_string(e->lhs) << ')'; break;
    case Op::Cos: os << "cos(" << to_string(e->lhs) << ')'; break;
    case Op::Exp: os << "exp(" << to_string(e->lhs) << ')'; break;
    case Op::Log: os << "log(" << to_string(e->lhs) << ')'; break;
    case Op::Sqrt: os << "sqrt(" << to_string(e->lhs) << ')'; break;
    case Op::Abs: os << "abs(" << to_string(e->lhs) << ')'; break;
    case Op::Sign: os << "sign(" << to_string(e->lhs) << ')'; break;
    case Op::Lacunary:
      os << "lacunary(" << e->value << ", " << to_string(e->lhs) << ')';
      if (e->index > 0) os << "'" << e->index;
      break;
  }
  return os.str();
}

namespace detail {

class Parser {
 public:
  Parser(std::string_view text, std::string field) : text_(text), field_(std::move(field)) {}

  NodePtr parse() {
    NodePtr e = sum();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(field_, what + " at column " + std::to_string(pos_ + 1) + " in \"" +
                                 std::string(text_) + "\"");
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  NodePtr sum() {
    NodePtr e = product();
    for (;;) {
      if (accept('+')) e = add(e, product());
      else if (accept('-')) e = sub(e, product());
      else return e;
    }
  }

  NodePtr product() {
    NodePtr e = unary();
    for (;;) {
      if (accept('*')) e = mul(e, unary());
      else if (accept('/')) e = div(e, unary());
      else return e;
    }
  }

  NodePtr unary() {
    if (accept('-')) return neg(unary());
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return pow(base, unary());
    return base;
  }

  NodePtr primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    const char c = text_[pos_];
    if (accept('(')) {
      NodePtr e = sum();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
    fail(std::string("unexpected '") + c + "'");
  }

  NodePtr number() {
    const char* begin = text_.data() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail("malformed number");
    pos_ += static_cast<std::size_t>(end - begin);
    return constant(v);
  }

  NodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                                   text_[pos_] == '_')) {
      ++pos_;
    }
    const std::string name(text_.substr(start, pos_ - start));
    if (name == "pi") return constant(std::numbers::pi);
    if (name == "t") return time_variable();
    if (name.size() >= 2 && name[0] == 'x' &&
        name.find_first_not_of("0123456789", 1) == std::string::npos) {
      const int axis = std::stoi(name.substr(1));
      if (axis < 1) fail("coordinate index must start at x1");
      return variable(axis - 1);
    }
    if (name == "lacunary") {
      expect('(');
      NodePtr s = sum();
      if (!is_const(s)) fail("lacunary decay exponent must be a constant");
      expect(',');
      NodePtr arg = sum();
      expect(')');
      return lacunary(s->value, 0, arg);
    }
    static const std::pair<const char*, Op> functions[] = {
        {"sin", Op::Sin},   {"cos", Op::Cos}, {"exp", Op::Exp},   {"log", Op::Log},
        {"sqrt", Op::Sqrt}, {"abs", Op::Abs}, {"sign", Op::Sign},
    };
    for (const auto& [fname, op] : functions) {
      if (name == fname) {
        expect('(');
        NodePtr arg = sum();
        expect(')');
        return apply(op, arg);
      }
    }
    pos_ = start;
    fail("unknown identifier '" + name + "'");
  }

  std::string_view text_;
  std::string field_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Parses text; `field` names the config key in error messages.
inline NodePtr parse(std::string_view text, const std::string& field = "") {
  return detail::Parser(text, field).parse();
}

}  // namespace weakhyp::expr
