#pragma once

// Small arithmetic language for log-densities and endowments written in
// scenario files, e.g. "-0.5*(E0 - mu)^2 / s^2" or "min(E1, 0)".
//
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := '-' unary | '+' unary | power
//   power  := atom ('^' unary)?            right associative
//   atom   := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "risksharing/error.hpp"
#include "risksharing/measures.hpp"

namespace risksharing {

class Expression {
 public:
  using Bindings = std::map<std::string, double, std::less<>>;

  static Expression parse(std::string_view text) {
    Parser p{text, 0};
    Expression e;
    e.source_ = std::string(text);
    e.root_ = p.expr();
    p.skip();
    if (p.pos != text.size()) p.fail("unexpected '" + std::string(1, text[p.pos]) + "'");
    return e;
  }

  const std::string& source() const { return source_; }

  double evaluate(const Bindings& bindings) const { return root_->eval(bindings); }

  /// Every free name used, in sorted order.
  std::set<std::string> names() const {
    std::set<std::string> out;
    root_->collect(out);
    return out;
  }

  /// Evaluates per state with `variables` bound to their state values and
  /// `parameters` held fixed. Variables shadow parameters.
  RandomVariable evaluate(const std::vector<std::string>& variable_names,
                          const std::vector<RandomVariable>& variables,
                          const Bindings& parameters = {}) const {
    if (variable_names.size() != variables.size()) {
      throw ContractError("Expression: names and variables differ in length");
    }
    for (const std::string& name : names()) {
      bool known = parameters.count(name) > 0;
      for (const auto& v : variable_names) known = known || v == name;
      if (!known) throw ValidationError("expression '" + source_ + "': unknown name '" + name + "'");
    }
    const std::size_t states = variables.empty() ? 0 : variables.front().size();
    for (const auto& v : variables) detail::require_same_size(states, v.size(), "Expression");
    Bindings b = parameters;
    std::vector<double> out(states);
    for (std::size_t s = 0; s < states; ++s) {
      for (std::size_t k = 0; k < variables.size(); ++k) b[variable_names[k]] = variables[k][s];
      out[s] = evaluate(b);
      if (!std::isfinite(out[s])) {
        throw ValidationError("expression '" + source_ + "' is not finite at state " +
                              std::to_string(s));
      }
    }
    return RandomVariable(std::move(out));
  }

 private:
  struct Node {
    virtual ~Node() = default;
    virtual double eval(const Bindings& b) const = 0;
    virtual void collect(std::set<std::string>& out) const = 0;
  };
  using NodePtr = std::shared_ptr<const Node>;

  struct Number final : Node {
    double value;
    explicit Number(double v) : value(v) {}
    double eval(const Bindings&) const override { return value; }
    void collect(std::set<std::string>&) const override {}
  };

  struct Name final : Node {
    std::string name;
    explicit Name(std::string n) : name(std::move(n)) {}
    double eval(const Bindings& b) const override {
      const auto it = b.find(name);
      if (it == b.end()) throw ValidationError("expression: unbound name '" + name + "'");
      return it->second;
    }
    void collect(std::set<std::string>& out) const override { out.insert(name); }
  };

  struct Call final : Node {
    std::function<double(const std::vector<double>&)> fn;
    std::vector<NodePtr> args;
    double eval(const Bindings& b) const override {
      std::vector<double> x;
      x.reserve(args.size());
      for (const auto& a : args) x.push_back(a->eval(b));
      return fn(x);
    }
    void collect(std::set<std::string>& out) const override {
      for (const auto& a : args) a->collect(out);
    }
  };

  static NodePtr call(std::function<double(const std::vector<double>&)> fn,
                      std::vector<NodePtr> args) {
    auto c = std::make_shared<Call>();
    c->fn = std::move(fn);
    c->args = std::move(args);
    return c;
  }

  struct Parser {
    std::string_view text;
    std::size_t pos;

    [[noreturn]] void fail(const std::string& what) const {
      throw ValidationError("expression '" + std::string(text) + "' at column " +
                            std::to_string(pos + 1) + ": " + what);
    }
    void skip() {
      while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }
    bool accept(char c) {
      skip();
      if (pos < text.size() && text[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    void expect(char c) {
      if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    NodePtr expr() {
      NodePtr lhs = term();
      while (true) {
        if (accept('+')) {
          lhs = call([](const auto& x) { return x[0] + x[1]; }, {lhs, term()});
        } else if (accept('-')) {
          lhs = call([](const auto& x) { return x[0] - x[1]; }, {lhs, term()});
        } else {
          return lhs;
        }
      }
    }

    NodePtr term() {
      NodePtr lhs = unary();
      while (true) {
        if (accept('*')) {
          lhs = call([](const auto& x) { return x[0] * x[1]; }, {lhs, unary()});
        } else if (accept('/')) {
          lhs = call([](const auto& x) { return x[0] / x[1]; }, {lhs, unary()});
        } else {
          return lhs;
        }
      }
    }

    NodePtr unary() {
      if (accept('-')) return call([](const auto& x) { return -x[0]; }, {unary()});
      if (accept('+')) return unary();
      return power();
    }

    NodePtr power() {
      NodePtr base = atom();
      if (accept('^')) {
        return call([](const auto& x) { return std::pow(x[0], x[1]); }, {base, unary()});
      }
      return base;
    }

    NodePtr atom() {
      skip();
      if (pos >= text.size()) fail("unexpected end of input");
      const char c = text[pos];
      if (accept('(')) {
        NodePtr inner = expr();
        expect(')');
        return inner;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const std::size_t start = pos;
        while (pos < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_')) {
          ++pos;
        }
        std::string name(text.substr(start, pos - start));
        if (accept('(')) return function(name);
        if (name == "pi") return std::make_shared<Number>(std::numbers::pi);
        return std::make_shared<Name>(std::move(name));
      }
      fail(std::string("unexpected '") + c + "'");
    }

    NodePtr number() {
      const std::size_t start = pos;
      while (pos < text.size() && (std::isdigit(static_cast<unsigned char>(text[pos])) ||
                                   text[pos] == '.')) {
        ++pos;
      }
      if (pos < text.size() && (text[pos] == 'e' || text[pos] == 'E')) {
        std::size_t look = pos + 1;
        if (look < text.size() && (text[look] == '+' || text[look] == '-')) ++look;
        if (look < text.size() && std::isdigit(static_cast<unsigned char>(text[look]))) {
          pos = look;
          while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
        }
      }
      const std::string token(text.substr(start, pos - start));
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(token, &used);
      } catch (const std::exception&) {
        fail("malformed number '" + token + "'");
      }
      if (used != token.size()) fail("malformed number '" + token + "'");
      return std::make_shared<Number>(v);
    }

    NodePtr function(const std::string& name) {
      std::vector<NodePtr> args;
      if (!accept(')')) {
        do {
          args.push_back(expr());
        } while (accept(','));
        expect(')');
      }
      auto unary_fn = [&](double (*f)(double)) {
        if (args.size() != 1) fail(name + " takes one argument");
        return call([f](const auto& x) { return f(x[0]); }, std::move(args));
      };
      auto binary_fn = [&](double (*f)(double, double)) {
        if (args.size() != 2) fail(name + " takes two arguments");
        return call([f](const auto& x) { return f(x[0], x[1]); }, std::move(args));
      };
      if (name == "exp") return unary_fn([](double x) { return std::exp(x); });
      if (name == "log") return unary_fn([](double x) { return std::log(x); });
      if (name == "sqrt") return unary_fn([](double x) { return std::sqrt(x); });
      if (name == "abs") return unary_fn([](double x) { return std::abs(x); });
      if (name == "sign") {
        return unary_fn([](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); });
      }
      if (name == "min") return binary_fn([](double a, double b) { return std::min(a, b); });
      if (name == "max") return binary_fn([](double a, double b) { return std::max(a, b); });
      fail("unknown function '" + name + "'");
    }
  };

  std::string source_;
  NodePtr root_;
};

}  // namespace risksharing
