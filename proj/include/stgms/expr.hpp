#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

namespace stgms {

//! A scalar function of (x, y, t) parsed from text; the source string rides
//! along so configs can be echoed back verbatim.
class Expression {
 public:
  Expression() = default;
  Expression(std::string text, std::function<double(double, double, double)> fn)
      : text_(std::move(text)), fn_(std::move(fn)) {}

  double operator()(double x, double y, double t) const {
    if (!fn_) throw std::runtime_error("expression: evaluating an empty expression");
    return fn_(x, y, t);
  }
  const std::string& text() const { return text_; }
  explicit operator bool() const { return static_cast<bool>(fn_); }

 private:
  std::string text_;
  std::function<double(double, double, double)> fn_;
};

namespace detail {

//! Recursive descent over: expr := term (('+'|'-') term)*, term := unary
//! (('*'|'/') unary)*, unary := ('-'|'+') unary | power, power := atom ('^'
//! unary)?, atom := number | x | y | t | sin/cos/exp '(' expr ')' | '(' expr ')'.
struct ExprParser {
  using Fn = std::function<double(double, double, double)>;
  const std::string& s;
  size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("expression: " + what + " at position " + std::to_string(pos));
  }
  void skip() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  bool eat(char c) {
    skip();
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  Fn expr() {
    Fn l = term();
    for (;;) {
      if (eat('+')) {
        Fn r = term();
        l = [l, r](double x, double y, double t) { return l(x, y, t) + r(x, y, t); };
      } else if (eat('-')) {
        Fn r = term();
        l = [l, r](double x, double y, double t) { return l(x, y, t) - r(x, y, t); };
      } else {
        return l;
      }
    }
  }

  Fn term() {
    Fn l = unary();
    for (;;) {
      if (eat('*')) {
        Fn r = unary();
        l = [l, r](double x, double y, double t) { return l(x, y, t) * r(x, y, t); };
      } else if (eat('/')) {
        Fn r = unary();
        l = [l, r](double x, double y, double t) { return l(x, y, t) / r(x, y, t); };
      } else {
        return l;
      }
    }
  }

  Fn unary() {
    if (eat('-')) {
      Fn r = unary();
      return [r](double x, double y, double t) { return -r(x, y, t); };
    }
    if (eat('+')) return unary();
    return power();
  }

  Fn power() {
    Fn l = atom();
    if (eat('^')) {
      Fn r = unary();  // right associative, exponent may carry its own sign
      return [l, r](double x, double y, double t) { return std::pow(l(x, y, t), r(x, y, t)); };
    }
    return l;
  }

  Fn atom() {
    skip();
    if (pos >= s.size()) fail("unexpected end of input");
    char c = s[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s.c_str() + pos;
      char* end = nullptr;
      double v = std::strtod(begin, &end);
      if (end == begin) fail("malformed number");
      pos += static_cast<size_t>(end - begin);
      return [v](double, double, double) { return v; };
    }
    if (c == '(') {
      ++pos;
      Fn inner = expr();
      if (!eat(')')) fail("expected ')'");
      return inner;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      size_t start = pos;
      while (pos < s.size() && std::isalpha(static_cast<unsigned char>(s[pos]))) ++pos;
      std::string word = s.substr(start, pos - start);
      if (word == "x") return [](double x, double, double) { return x; };
      if (word == "y") return [](double, double y, double) { return y; };
      if (word == "t") return [](double, double, double t) { return t; };
      if (word == "sin" || word == "cos" || word == "exp") {
        if (!eat('(')) fail("expected '(' after " + word);
        Fn inner = expr();
        if (!eat(')')) fail("expected ')'");
        if (word == "sin") return [inner](double x, double y, double t) { return std::sin(inner(x, y, t)); };
        if (word == "cos") return [inner](double x, double y, double t) { return std::cos(inner(x, y, t)); };
        return [inner](double x, double y, double t) { return std::exp(inner(x, y, t)); };
      }
      pos = start;
      fail("unknown identifier '" + word + "'");
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

}  // namespace detail

inline Expression parse_expression(const std::string& text) {
  detail::ExprParser p{text};
  p.skip();
  if (p.pos >= text.size()) throw std::invalid_argument("expression: empty input");
  auto fn = p.expr();
  p.skip();
  if (p.pos != text.size()) p.fail("trailing input");
  return Expression(text, std::move(fn));
}

}  // namespace stgms
