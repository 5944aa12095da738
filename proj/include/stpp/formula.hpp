#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stpp/covariates.hpp"
#include "stpp/error.hpp"
#include "stpp/pattern.hpp"

namespace stpp {

struct Power {
  std::string name;
  int exponent = 1;
  bool operator==(const Power&) const = default;
};

// A bare variable (one power, exponent 1, not wrapped) or an I() monomial.
struct Factor {
  bool wrapped = false;
  std::vector<Power> powers;

  std::string to_string() const {
    if (!wrapped) return powers.front().name;
    std::string s = "I(";
    for (std::size_t k = 0; k < powers.size(); ++k) {
      if (k) s += "*";
      s += powers[k].name;
      if (powers[k].exponent != 1) s += "^" + std::to_string(powers[k].exponent);
    }
    return s + ")";
  }
  bool operator==(const Factor&) const = default;
};

struct Term {
  std::vector<Factor> factors;

  std::string to_string() const {
    std::string s;
    for (std::size_t k = 0; k < factors.size(); ++k) {
      if (k) s += ":";
      s += factors[k].to_string();
    }
    return s;
  }
  // Order-free identity of the term, used to drop duplicates.
  std::vector<std::string> key() const {
    std::vector<std::string> k;
    for (const auto& f : factors) k.push_back(f.to_string());
    std::sort(k.begin(), k.end());
    return k;
  }
  bool operator==(const Term&) const = default;
};

struct Formula {
  bool intercept = true;
  std::vector<Term> terms;

  std::string to_string() const {
    std::string s = "~ ";
    s += intercept ? "1" : "0";
    for (const auto& t : terms) s += " + " + t.to_string();
    return s;
  }

  std::vector<std::string> variables() const {
    std::vector<std::string> out;
    for (const auto& t : terms)
      for (const auto& f : t.factors)
        for (const auto& p : f.powers)
          if (std::find(out.begin(), out.end(), p.name) == out.end()) out.push_back(p.name);
    return out;
  }

  bool uses(const std::string& name) const {
    const auto v = variables();
    return std::find(v.begin(), v.end(), name) != v.end();
  }

  bool operator==(const Formula&) const = default;
};

namespace detail {

class FormulaParser {
 public:
  explicit FormulaParser(const std::string& src) : s_(src) {}

  Formula parse() {
    skip();
    if (pos_ >= s_.size()) throw FormulaError("empty formula", pos_);
    if (s_[pos_] != '~') throw FormulaError("formula must start with '~'", pos_);
    ++pos_;
    Formula f;
    bool any = false;
    do {
      parse_term(f);
      any = true;
    } while (eat('+'));
    skip();
    if (pos_ != s_.size()) throw FormulaError("unexpected token '" + std::string(1, s_[pos_]) + "'", pos_);
    if (!any) throw FormulaError("formula has no terms", pos_);
    return f;
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
  static bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
  static bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

  std::string ident() {
    skip();
    if (pos_ >= s_.size() || !ident_start(s_[pos_]))
      throw FormulaError(pos_ >= s_.size() ? "unexpected end of formula" : "expected a variable name", pos_);
    const std::size_t start = pos_;
    while (pos_ < s_.size() && ident_char(s_[pos_])) ++pos_;
    return s_.substr(start, pos_ - start);
  }

  int integer() {
    skip();
    const std::size_t start = pos_;
    bool negative = false;
    if (pos_ < s_.size() && s_[pos_] == '-') negative = true, ++pos_;
    int v = 0;
    bool any = false;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      v = v * 10 + (s_[pos_++] - '0');
      any = true;
    }
    if (!any) throw FormulaError("expected an integer power", start);
    if (negative || v < 1) throw FormulaError("power must be an integer >= 1", start);
    return v;
  }

  void parse_term(Formula& f) {
    skip();
    const std::size_t start = pos_;
    if (pos_ < s_.size() && (s_[pos_] == '1' || s_[pos_] == '0') &&
        (pos_ + 1 == s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])))) {
      f.intercept = s_[pos_] == '1';
      ++pos_;
      skip();
      if (pos_ < s_.size() && s_[pos_] == ':') throw FormulaError("constant cannot appear in an interaction", pos_);
      return;
    }
    Term t;
    do t.factors.push_back(parse_factor());
    while (eat(':'));
    const auto key = t.key();
    for (const auto& existing : f.terms)
      if (existing.key() == key) return;
    (void)start;
    f.terms.push_back(std::move(t));
  }

  Factor parse_factor() {
    skip();
    const std::size_t start = pos_;
    std::string name = ident();
    skip();
    if (pos_ < s_.size() && s_[pos_] == '(') {
      if (name == "s" || name == "te" || name == "ti")
        throw FormulaError("unsupported: smooth terms", start);
      if (name != "I") throw FormulaError("unknown function '" + name + "'", start);
      ++pos_;
      Factor fac;
      fac.wrapped = true;
      do {
        Power p{ident(), 1};
        if (eat('^')) p.exponent = integer();
        auto same = std::find_if(fac.powers.begin(), fac.powers.end(), [&](const Power& q) { return q.name == p.name; });
        if (same != fac.powers.end())
          same->exponent += p.exponent;
        else
          fac.powers.push_back(std::move(p));
      } while (eat('*'));
      if (!eat(')')) throw FormulaError("expected ')' closing I(", pos_);
      return fac;
    }
    if (pos_ < s_.size() && s_[pos_] == '^') throw FormulaError("powers must be written inside I()", pos_);
    return Factor{false, {Power{std::move(name), 1}}};
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Grammar: "~" term ("+" term)*, term := factor (":" factor)*,
// factor := name | "1" | "0" | "I(" name["^"k] ("*" name["^"k])* ")".
// "0" drops the intercept. Duplicate terms are removed.
inline Formula parse_formula(const std::string& src) { return detail::FormulaParser(src).parse(); }

using CovariateSet = std::map<std::string, std::shared_ptr<const CovariateGrid>>;

// Coordinates and marks of the rows of a design matrix.
struct PointTable {
  std::vector<double> x, y, t;
  std::vector<MarkColumn> marks;

  std::size_t size() const { return x.size(); }

  static PointTable from(const PointPattern& p) {
    PointTable tab;
    for (const auto& e : p.events()) {
      tab.x.push_back(e.x);
      tab.y.push_back(e.y);
      tab.t.push_back(e.t);
    }
    tab.marks = p.marks();
    return tab;
  }

  const MarkColumn* mark(const std::string& name) const {
    for (const auto& m : marks)
      if (m.name == name) return &m;
    return nullptr;
  }
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DesignMatrix {
  std::vector<std::string> names;
  RowMatrix values;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
};

namespace detail {

struct Column {
  std::string name;
  std::vector<double> values;
};

inline std::vector<double> numeric_variable(const std::string& name, const PointTable& pts, const CovariateSet& covs) {
  if (name == "x") return pts.x;
  if (name == "y") return pts.y;
  if (name == "t") return pts.t;
  if (const MarkColumn* m = pts.mark(name)) {
    if (m->is_categorical()) throw InvalidArgument("categorical variable '" + name + "' used inside I()");
    return m->values;
  }
  if (auto it = covs.find(name); it != covs.end()) {
    std::vector<double> v(pts.size());
    for (std::size_t r = 0; r < pts.size(); ++r) v[r] = it->second->lookup_nearest(pts.x[r], pts.y[r], pts.t[r]);
    return v;
  }
  throw InvalidArgument("unresolved identifier '" + name + "' in formula");
}

inline std::vector<Column> factor_columns(const Factor& f, const PointTable& pts, const CovariateSet& covs) {
  const std::size_t n = pts.size();
  if (!f.wrapped) {
    const std::string& name = f.powers.front().name;
    if (const MarkColumn* m = pts.mark(name); m && m->is_categorical()) {
      std::vector<Column> cols;
      for (std::size_t l = 1; l < m->levels.size(); ++l) {
        Column c{name + m->levels[l], std::vector<double>(n)};
        for (std::size_t r = 0; r < n; ++r) c.values[r] = m->codes[r] == static_cast<int>(l) ? 1.0 : 0.0;
        cols.push_back(std::move(c));
      }
      return cols;
    }
    return {Column{name, numeric_variable(name, pts, covs)}};
  }
  Column c{f.to_string(), std::vector<double>(n, 1.0)};
  for (const auto& p : f.powers) {
    const auto v = numeric_variable(p.name, pts, covs);
    for (std::size_t r = 0; r < n; ++r) {
      double term = 1.0;
      for (int k = 0; k < p.exponent; ++k) term *= v[r];
      c.values[r] *= term;
    }
  }
  return {std::move(c)};
}

}  // namespace detail

// Evaluates every term at every row. Categorical marks expand to
// treatment-coded indicators with the first (lexicographic) level as
// reference; interactions are elementwise products.
inline DesignMatrix build_design(const Formula& f, const PointTable& pts, const CovariateSet& covs = {}) {
  std::vector<detail::Column> cols;
  const std::size_t n = pts.size();
  if (f.intercept) cols.push_back({"(Intercept)", std::vector<double>(n, 1.0)});
  for (const auto& term : f.terms) {
    std::vector<detail::Column> acc{{"", std::vector<double>(n, 1.0)}};
    for (const auto& fac : term.factors) {
      const auto fcols = detail::factor_columns(fac, pts, covs);
      std::vector<detail::Column> next;
      for (const auto& a : acc)
        for (const auto& b : fcols) {
          detail::Column c{a.name.empty() ? b.name : a.name + ":" + b.name, a.values};
          for (std::size_t r = 0; r < n; ++r) c.values[r] *= b.values[r];
          next.push_back(std::move(c));
        }
      acc = std::move(next);
    }
    for (auto& c : acc) cols.push_back(std::move(c));
  }
  DesignMatrix d;
  d.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    d.names.push_back(cols[c].name);
    for (std::size_t r = 0; r < n; ++r) {
      const double v = cols[c].values[r];
      if (!std::isfinite(v)) throw InvalidArgument("design column '" + cols[c].name + "' has non-finite entries");
      d.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return d;
}

}  // namespace stpp
