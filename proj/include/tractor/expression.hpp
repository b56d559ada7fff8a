#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tractor/error.hpp"
#include "tractor/jet.hpp"

namespace tractor {

class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t offset, const std::string& msg)
      : Error(ErrorKind::BadInput, "syntax error at offset " + std::to_string(offset) + ": " + msg),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

enum class Op { Num, Var, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Exp, Log, Sqrt };

struct ExprNode {
  Op op;
  double value = 0.0;  // Num
  int var = 0;         // Var, zero-based
  std::shared_ptr<const ExprNode> lhs, rhs;
};

using ExprPtr = std::shared_ptr<const ExprNode>;

inline std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Immutable expression tree over coordinates x1..xn.
class Expression {
 public:
  Expression() : root_(constant_node(0.0)) {}
  explicit Expression(ExprPtr root) : root_(std::move(root)) {}
  static Expression constant(double v) { return Expression(constant_node(v)); }
  static Expression coordinate(int i) {
    auto n = std::make_shared<ExprNode>();
    n->op = Op::Var;
    n->var = i;
    return Expression(n);
  }

  const ExprPtr& root() const { return root_; }

  // Highest coordinate index referenced, plus one.
  int arity() const { return arity_of(root_.get()); }

  template <class T>
  T eval(std::span<const T> x) const {
    return eval_node<T>(root_.get(), x);
  }
  double operator()(std::span<const double> x) const { return eval<double>(x); }

  std::string str() const {
    std::string out;
    print(root_.get(), out);
    return out;
  }

  friend bool operator==(const Expression& a, const Expression& b) { return equal(a.root_.get(), b.root_.get()); }

  friend Expression operator+(const Expression& a, const Expression& b) { return binary(Op::Add, a, b); }
  friend Expression operator-(const Expression& a, const Expression& b) { return binary(Op::Sub, a, b); }
  friend Expression operator*(const Expression& a, const Expression& b) { return binary(Op::Mul, a, b); }
  friend Expression operator/(const Expression& a, const Expression& b) { return binary(Op::Div, a, b); }
  friend Expression operator-(const Expression& a) { return unary(Op::Neg, a); }
  friend Expression exp(const Expression& a) { return unary(Op::Exp, a); }
  friend Expression pow(const Expression& a, const Expression& b) { return binary(Op::Pow, a, b); }

  static Expression unary(Op op, const Expression& a) {
    auto n = std::make_shared<ExprNode>();
    n->op = op;
    n->lhs = a.root_;
    return Expression(n);
  }
  static Expression binary(Op op, const Expression& a, const Expression& b) {
    auto n = std::make_shared<ExprNode>();
    n->op = op;
    n->lhs = a.root_;
    n->rhs = b.root_;
    return Expression(n);
  }

 private:
  static ExprPtr constant_node(double v) {
    auto n = std::make_shared<ExprNode>();
    n->op = Op::Num;
    n->value = v;
    return n;
  }

  static int arity_of(const ExprNode* n) {
    if (n == nullptr) return 0;
    if (n->op == Op::Var) return n->var + 1;
    return std::max(arity_of(n->lhs.get()), arity_of(n->rhs.get()));
  }

  static bool integral_exponent(const ExprNode* n, int& out) {
    double v;
    if (n->op == Op::Num) v = n->value;
    else if (n->op == Op::Neg && n->lhs->op == Op::Num) v = -n->lhs->value;
    else return false;
    if (v != std::floor(v) || std::abs(v) > 64) return false;
    out = static_cast<int>(v);
    return true;
  }

  template <class T>
  static T eval_node(const ExprNode* n, std::span<const T> x) {
    using std::cos;
    using std::exp;
    using std::log;
    using std::sin;
    using std::sqrt;
    switch (n->op) {
      case Op::Num: return T(n->value);
      case Op::Var:
        if (n->var >= static_cast<int>(x.size()))
          throw bad_input("expression uses x" + std::to_string(n->var + 1) + " beyond dimension " +
                          std::to_string(x.size()));
        return x[static_cast<std::size_t>(n->var)];
      case Op::Add: return eval_node(n->lhs.get(), x) + eval_node(n->rhs.get(), x);
      case Op::Sub: return eval_node(n->lhs.get(), x) - eval_node(n->rhs.get(), x);
      case Op::Mul: return eval_node(n->lhs.get(), x) * eval_node(n->rhs.get(), x);
      case Op::Div: {
        T d = eval_node(n->rhs.get(), x);
        if constexpr (std::is_same_v<T, double>)
          if (d == 0.0) throw bad_input("division by zero in expression");
        return eval_node(n->lhs.get(), x) / d;
      }
      case Op::Pow: {
        T b = eval_node(n->lhs.get(), x);
        int k;
        if (integral_exponent(n->rhs.get(), k)) {
          if constexpr (std::is_same_v<T, double>) return std::pow(b, k);
          else return pow(b, k);
        }
        if (n->rhs->op == Op::Num) {
          if constexpr (std::is_same_v<T, double>) {
            if (!(b > 0.0)) throw bad_input("non-integer power of non-positive value in expression");
            return std::pow(b, n->rhs->value);
          } else {
            return pow(b, n->rhs->value);
          }
        }
        T e = eval_node(n->rhs.get(), x);
        if constexpr (std::is_same_v<T, double>) {
          if (!(b > 0.0)) throw bad_input("non-integer power of non-positive value in expression");
          return std::pow(b, e);
        } else {
          return pow(b, e);
        }
      }
      case Op::Neg: return -eval_node(n->lhs.get(), x);
      case Op::Sin: return sin(eval_node(n->lhs.get(), x));
      case Op::Cos: return cos(eval_node(n->lhs.get(), x));
      case Op::Exp: return exp(eval_node(n->lhs.get(), x));
      case Op::Log: {
        T a = eval_node(n->lhs.get(), x);
        if constexpr (std::is_same_v<T, double>)
          if (!(a > 0.0)) throw bad_input("log of non-positive value in expression");
        return log(a);
      }
      case Op::Sqrt: {
        T a = eval_node(n->lhs.get(), x);
        if constexpr (std::is_same_v<T, double>)
          if (!(a >= 0.0)) throw bad_input("sqrt of negative value in expression");
        return sqrt(a);
      }
    }
    throw bad_input("corrupt expression tree");
  }

  static const char* func_name(Op op) {
    switch (op) {
      case Op::Sin: return "sin";
      case Op::Cos: return "cos";
      case Op::Exp: return "exp";
      case Op::Log: return "log";
      case Op::Sqrt: return "sqrt";
      default: return nullptr;
    }
  }

  // Fully parenthesised so that reparsing gives back the same tree.
  static void print(const ExprNode* n, std::string& out) {
    switch (n->op) {
      case Op::Num:
        if (n->value < 0 || std::signbit(n->value)) {
          out += "(-" + shortest(-n->value) + ")";
        } else {
          out += shortest(n->value);
        }
        return;
      case Op::Var: out += "x" + std::to_string(n->var + 1); return;
      case Op::Neg:
        out += "(-";
        print(n->lhs.get(), out);
        out += ")";
        return;
      case Op::Add: case Op::Sub: case Op::Mul: case Op::Div: case Op::Pow: {
        static constexpr char sym[] = "+-*/^";
        out += "(";
        print(n->lhs.get(), out);
        out += sym[static_cast<int>(n->op) - static_cast<int>(Op::Add)];
        print(n->rhs.get(), out);
        out += ")";
        return;
      }
      default:
        out += func_name(n->op);
        out += "(";
        print(n->lhs.get(), out);
        out += ")";
    }
  }

  static bool equal(const ExprNode* a, const ExprNode* b) {
    if (a == b) return true;
    if (a == nullptr || b == nullptr || a->op != b->op) return false;
    if (a->op == Op::Num) return a->value == b->value;
    if (a->op == Op::Var) return a->var == b->var;
    return equal(a->lhs.get(), b->lhs.get()) && equal(a->rhs.get(), b->rhs.get());
  }

  ExprPtr root_;
};

namespace detail {

// expr   := term (('+' | '-') term)*
// term   := unary (('*' | '/') unary)*
// unary  := ('+' | '-') unary | power
// power  := atom ('^' unary)?
// atom   := number | 'pi' | 'x' digits | func '(' expr ')' | '(' expr ')'
class Parser {
 public:
  Parser(std::string_view src, int max_vars) : s_(src), max_vars_(max_vars) {}

  Expression parse() {
    skip();
    Expression e = expr();
    skip();
    if (pos_ != s_.size()) throw SyntaxError(pos_, "unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expression expr() {
    Expression e = term();
    for (;;) {
      if (eat('+')) e = e + term();
      else if (eat('-')) e = e - term();
      else return e;
    }
  }
  Expression term() {
    Expression e = unary();
    for (;;) {
      if (eat('*')) e = e * unary();
      else if (eat('/')) e = e / unary();
      else return e;
    }
  }
  Expression unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    return power();
  }
  Expression power() {
    Expression b = atom();
    if (eat('^')) return pow(b, unary());
    return b;
  }
  Expression atom() {
    skip();
    if (pos_ >= s_.size()) throw SyntaxError(pos_, "unexpected end of input");
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
    if (eat('(')) {
      Expression e = expr();
      if (!eat(')')) throw SyntaxError(pos_, "expected ')'");
      return e;
    }
    throw SyntaxError(pos_, "unexpected '" + std::string(1, c) + "'");
  }
  Expression number() {
    double v = 0.0;
    const char* first = s_.data() + pos_;
    auto res = std::from_chars(first, s_.data() + s_.size(), v);
    if (res.ec != std::errc()) throw SyntaxError(pos_, "malformed number");
    pos_ += static_cast<std::size_t>(res.ptr - first);
    return Expression::constant(v);
  }
  Expression identifier() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    const std::string id(s_.substr(start, pos_ - start));
    if (id == "pi") return Expression::constant(std::numbers::pi);
    if (id.size() > 1 && id[0] == 'x' &&
        id.find_first_not_of("0123456789", 1) == std::string::npos) {
      const int k = std::stoi(id.substr(1));
      if (k < 1 || k > max_vars_) throw Error(ErrorKind::BadInput, "unknown identifier '" + id + "' at offset " + std::to_string(start));
      return Expression::coordinate(k - 1);
    }
    Op op;
    if (id == "sin") op = Op::Sin;
    else if (id == "cos") op = Op::Cos;
    else if (id == "exp") op = Op::Exp;
    else if (id == "log") op = Op::Log;
    else if (id == "sqrt") op = Op::Sqrt;
    else throw Error(ErrorKind::BadInput, "unknown identifier '" + id + "' at offset " + std::to_string(start));
    if (!eat('(')) throw SyntaxError(pos_, "expected '(' after " + id);
    Expression arg = expr();
    if (!eat(')')) throw SyntaxError(pos_, "expected ')'");
    return Expression::unary(op, arg);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int max_vars_;
};

}  // namespace detail

inline Expression parse_expression(std::string_view src, int max_vars = 6) {
  return detail::Parser(src, max_vars).parse();
}

}  // namespace tractor
