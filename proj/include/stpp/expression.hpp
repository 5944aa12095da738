#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stpp/error.hpp"

namespace stpp {

// Scalar arithmetic over x, y, t, a parameter vector a[1..k] (1-based) and
// named variables resolved at evaluation time. Supports + - * / ^, unary
// minus, parentheses and exp, log, sqrt, abs, sin, cos, pow.
class Expression {
 public:
  struct Env {
    double x = 0.0, y = 0.0, t = 0.0;
    std::span<const double> par;
    // Value of any other identifier (covariates); may be empty.
    std::function<double(const std::string&, double, double, double)> lookup;
  };

  static Expression parse(const std::string& src) {
    Parser p{src, 0};
    Expression e;
    e.root_ = p.expr();
    p.skip();
    if (p.pos != src.size()) throw FormulaError("unexpected '" + std::string(1, src[p.pos]) + "'", p.pos);
    e.source_ = src;
    return e;
  }

  double operator()(const Env& env) const { return eval(*root_, env); }
  double operator()(double x, double y, double t, std::span<const double> par = {}) const {
    return eval(*root_, Env{x, y, t, par, {}});
  }

  const std::string& source() const { return source_; }

  // Identifiers other than x, y, t and the parameter vector.
  std::vector<std::string> free_names() const {
    std::vector<std::string> out;
    collect(*root_, out);
    return out;
  }

 private:
  enum class Op { Number, Var, Param, Neg, Add, Sub, Mul, Div, Pow, Call };
  struct Node {
    Op op = Op::Number;
    double value = 0.0;
    std::string name;
    std::size_t index = 0;
    std::vector<std::shared_ptr<const Node>> args;
  };
  using NodePtr = std::shared_ptr<const Node>;

  static NodePtr make(Op op, std::vector<NodePtr> args = {}) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->args = std::move(args);
    return n;
  }

  struct Parser {
    const std::string& s;
    std::size_t pos;

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
    void expect(char c) {
      if (!eat(c)) throw FormulaError(std::string("expected '") + c + "'", pos);
    }

    NodePtr expr() {
      NodePtr lhs = term();
      for (;;) {
        if (eat('+'))
          lhs = make(Op::Add, {lhs, term()});
        else if (eat('-'))
          lhs = make(Op::Sub, {lhs, term()});
        else
          return lhs;
      }
    }
    NodePtr term() {
      NodePtr lhs = unary();
      for (;;) {
        if (eat('*'))
          lhs = make(Op::Mul, {lhs, unary()});
        else if (eat('/'))
          lhs = make(Op::Div, {lhs, unary()});
        else
          return lhs;
      }
    }
    NodePtr unary() {
      if (eat('-')) return make(Op::Neg, {unary()});
      if (eat('+')) return unary();
      NodePtr base = primary();
      if (eat('^')) return make(Op::Pow, {base, unary()});
      return base;
    }
    NodePtr primary() {
      skip();
      if (pos >= s.size()) throw FormulaError("unexpected end of expression", pos);
      const char c = s[pos];
      if (c == '(') {
        ++pos;
        NodePtr e = expr();
        expect(')');
        return e;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        const char* begin = s.c_str() + pos;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) throw FormulaError("bad number", pos);
        pos += static_cast<std::size_t>(end - begin);
        auto n = std::make_shared<Node>();
        n->value = v;
        return n;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const std::size_t start = pos;
        while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_' || s[pos] == '.'))
          ++pos;
        std::string name = s.substr(start, pos - start);
        if (eat('[')) {
          skip();
          const std::size_t at = pos;
          std::size_t idx = 0;
          bool any = false;
          while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            idx = idx * 10 + static_cast<std::size_t>(s[pos++] - '0');
            any = true;
          }
          if (!any || idx < 1) throw FormulaError("parameter index must be an integer >= 1", at);
          expect(']');
          auto n = std::make_shared<Node>();
          n->op = Op::Param;
          n->name = name;
          n->index = idx - 1;
          return n;
        }
        if (eat('(')) {
          auto n = std::make_shared<Node>();
          n->op = Op::Call;
          n->name = name;
          if (!eat(')')) {
            do n->args.push_back(expr());
            while (eat(','));
            expect(')');
          }
          static const char* known[] = {"exp", "log", "sqrt", "abs", "sin", "cos", "pow"};
          bool ok = false;
          for (const char* k : known) ok |= name == k;
          if (!ok) throw FormulaError("unknown function '" + name + "'", start);
          const std::size_t want = name == "pow" ? 2 : 1;
          if (n->args.size() != want) throw FormulaError("wrong argument count for '" + name + "'", start);
          return n;
        }
        auto n = std::make_shared<Node>();
        n->op = Op::Var;
        n->name = std::move(name);
        return n;
      }
      throw FormulaError(std::string("unexpected '") + c + "'", pos);
    }
  };

  static double eval(const Node& n, const Env& env) {
    switch (n.op) {
      case Op::Number:
        return n.value;
      case Op::Var:
        if (n.name == "x") return env.x;
        if (n.name == "y") return env.y;
        if (n.name == "t") return env.t;
        if (env.lookup) return env.lookup(n.name, env.x, env.y, env.t);
        throw InvalidArgument("unresolved identifier '" + n.name + "' in expression");
      case Op::Param:
        if (n.index >= env.par.size())
          throw InvalidArgument("parameter " + n.name + "[" + std::to_string(n.index + 1) + "] not supplied");
        return env.par[n.index];
      case Op::Neg:
        return -eval(*n.args[0], env);
      case Op::Add:
        return eval(*n.args[0], env) + eval(*n.args[1], env);
      case Op::Sub:
        return eval(*n.args[0], env) - eval(*n.args[1], env);
      case Op::Mul:
        return eval(*n.args[0], env) * eval(*n.args[1], env);
      case Op::Div:
        return eval(*n.args[0], env) / eval(*n.args[1], env);
      case Op::Pow:
        return std::pow(eval(*n.args[0], env), eval(*n.args[1], env));
      case Op::Call: {
        const double a = eval(*n.args[0], env);
        if (n.name == "exp") return std::exp(a);
        if (n.name == "log") return std::log(a);
        if (n.name == "sqrt") return std::sqrt(a);
        if (n.name == "abs") return std::abs(a);
        if (n.name == "sin") return std::sin(a);
        if (n.name == "cos") return std::cos(a);
        return std::pow(a, eval(*n.args[1], env));
      }
    }
    return 0.0;
  }

  static void collect(const Node& n, std::vector<std::string>& out) {
    if (n.op == Op::Var && n.name != "x" && n.name != "y" && n.name != "t") {
      bool seen = false;
      for (const auto& o : out) seen |= o == n.name;
      if (!seen) out.push_back(n.name);
    }
    for (const auto& a : n.args) collect(*a, out);
  }

  NodePtr root_;
  std::string source_;
};

}  // namespace stpp
