#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stpp/error.hpp"
#include "stpp/formula.hpp"
#include "stpp/glm.hpp"
#include "stpp/parallel.hpp"
#include "stpp/pattern.hpp"
#include "stpp/random.hpp"

namespace stpp {

// Data events followed by dummy points, with counting weights.
struct Quadrature {
  PointTable points;
  std::vector<double> weights;
  std::vector<char> is_data;
  std::size_t n_data = 0;
  std::size_t n_dummy = 0;
  std::array<std::size_t, 3> nd{};  // dummy grid; on networks nd[0]*nd[1] arc-length pieces
  double volume = 0.0;              // per type
  std::size_t types = 1;
  std::string type_mark;            // empty unless replicated per type
  std::vector<std::string> warnings;

  std::size_t size() const { return weights.size(); }
};

struct QuadratureOptions {
  std::optional<std::array<std::size_t, 3>> nd;
  std::uint64_t seed = 0;
  // Categorical mark whose levels each get their own copy of the dummies.
  std::string type_mark;
};

// Default dummy grid: ceil((4n)^(1/3)) cells per axis, about 4n dummies.
inline std::array<std::size_t, 3> default_dummy_grid(std::size_t n) {
  const auto k = static_cast<std::size_t>(std::ceil(std::cbrt(4.0 * static_cast<double>(std::max<std::size_t>(n, 1)))));
  return {k, k, k};
}

namespace detail {

inline std::size_t cell_of(double v, double lo, double width, std::size_t count) {
  const double u = (v - lo) / width;
  const auto c = static_cast<long long>(std::floor(u));
  return static_cast<std::size_t>(std::clamp<long long>(c, 0, static_cast<long long>(count) - 1));
}

// Fills non-type marks of dummy rows from the nearest data row, using the
// axes flagged in `use` (x, y, t) for the distance.
inline void impute_marks(PointTable& tab, std::size_t n_data, const std::vector<MarkColumn>& data_marks,
                         const std::string& skip, std::array<bool, 3> use) {
  for (const auto& dm : data_marks) {
    if (dm.name == skip) continue;
    MarkColumn* col = nullptr;
    for (auto& m : tab.marks)
      if (m.name == dm.name) col = &m;
    if (!col) continue;
    for (std::size_t r = n_data; r < tab.size(); ++r) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n_data; ++j) {
        double d = 0.0;
        if (use[0]) d += (tab.x[r] - tab.x[j]) * (tab.x[r] - tab.x[j]);
        if (use[1]) d += (tab.y[r] - tab.y[j]) * (tab.y[r] - tab.y[j]);
        if (use[2]) d += (tab.t[r] - tab.t[j]) * (tab.t[r] - tab.t[j]);
        if (d < bd) bd = d, best = j;
      }
      if (col->is_categorical())
        col->codes[r] = col->codes[best];
      else
        col->values[r] = col->values[best];
    }
  }
}

inline void append_mark_slots(PointTable& tab, std::size_t extra) {
  for (auto& m : tab.marks) {
    if (m.is_categorical())
      m.codes.resize(m.codes.size() + extra, 0);
    else
      m.values.resize(m.values.size() + extra, 0.0);
  }
}

}  // namespace detail

// Stratified dummies (one uniform point per grid cell; on networks one per
// arc-length piece, jittered in time) and Berman-Turner counting weights
// w = cell volume / number of points in the cell, so sum(w) = volume.
inline Quadrature make_quadrature(const PointPattern& p, const QuadratureOptions& opt = {}) {
  if (p.empty()) throw InvalidArgument("make_quadrature: empty pattern");
  Quadrature q;
  q.n_data = p.size();
  q.nd = opt.nd.value_or(default_dummy_grid(p.size()));
  for (auto& v : q.nd) v = std::max<std::size_t>(v, 1);
  const std::size_t requested = q.nd[0] * q.nd[1] * q.nd[2];
  if (requested * 8 < p.size()) {
    q.warnings.push_back("dummy grid of " + std::to_string(requested) + " points is too small for " +
                         std::to_string(p.size()) + " events; enlarged to the default");
    q.nd = default_dummy_grid(p.size());
  }

  const MarkColumn* type = nullptr;
  if (!opt.type_mark.empty()) {
    type = p.mark(opt.type_mark);
    if (!type || !type->is_categorical())
      throw InvalidArgument("marked fit needs a categorical mark named '" + opt.type_mark + "'");
    q.type_mark = opt.type_mark;
    q.types = type->levels.size();
  }

  Rng rng(opt.seed);
  const auto& iv = p.interval();
  const double dt = iv.length() / static_cast<double>(q.nd[2]);

  // Spatial cells: rectangle grid or arc-length pieces.
  struct Piece {
    std::size_t segment;
    double start, length;
  };
  std::vector<Piece> pieces;
  std::vector<std::size_t> first_piece;  // per segment
  std::vector<std::size_t> pieces_per_segment;
  std::size_t n_space;
  if (p.on_network()) {
    const auto& net = *p.network();
    const double target = net.total_length() / static_cast<double>(q.nd[0] * q.nd[1]);
    for (std::size_t s = 0; s < net.segment_count(); ++s) {
      const auto m = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(net.length(s) / target - 1e-9)));
      first_piece.push_back(pieces.size());
      pieces_per_segment.push_back(m);
      for (std::size_t k = 0; k < m; ++k)
        pieces.push_back({s, net.length(s) * static_cast<double>(k) / static_cast<double>(m),
                          net.length(s) / static_cast<double>(m)});
    }
    n_space = pieces.size();
  } else {
    n_space = q.nd[0] * q.nd[1];
  }
  const std::size_t n_cells = n_space * q.nd[2];
  q.volume = p.volume();

  const auto& W = p.window();
  const double cw = W.width() / static_cast<double>(q.nd[0]);
  const double ch = W.height() / static_cast<double>(q.nd[1]);
  auto space_cell_volume = [&](std::size_t s) { return p.on_network() ? pieces[s].length : cw * ch; };

  // Dummy locations (shared by every type).
  std::vector<Event> dummies;
  std::vector<std::size_t> dummy_cell;
  dummies.reserve(n_cells);
  for (std::size_t k = 0; k < q.nd[2]; ++k)
    for (std::size_t s = 0; s < n_space; ++s) {
      Event e;
      if (p.on_network()) {
        const auto& pc = pieces[s];
        const auto pos = p.network()->position({pc.segment, pc.start + 0.5 * pc.length});
        e.x = pos.x;
        e.y = pos.y;
      } else {
        const std::size_t i = s % q.nd[0], j = s / q.nd[0];
        e.x = W.x0 + (static_cast<double>(i) + rng.uniform()) * cw;
        e.y = W.y0 + (static_cast<double>(j) + rng.uniform()) * ch;
      }
      e.t = iv.t0 + (static_cast<double>(k) + rng.uniform()) * dt;
      dummies.push_back(e);
      dummy_cell.push_back(s + n_space * k);
    }

  auto data_cell = [&](std::size_t i) {
    const auto& e = p[i];
    std::size_t s;
    if (p.on_network()) {
      const auto np = p.network_coords()[i];
      const std::size_t m = pieces_per_segment[np.segment];
      const double plen = p.network()->length(np.segment) / static_cast<double>(m);
      s = first_piece[np.segment] + detail::cell_of(np.offset, 0.0, plen, m);
    } else {
      s = detail::cell_of(e.x, W.x0, cw, q.nd[0]) + q.nd[0] * detail::cell_of(e.y, W.y0, ch, q.nd[1]);
    }
    return s + n_space * detail::cell_of(e.t, iv.t0, dt, q.nd[2]);
  };

  // Rows: data, then dummies for type 0, type 1, ...
  q.points = PointTable::from(p);
  q.is_data.assign(p.size(), 1);
  std::vector<std::size_t> row_cell(p.size()), row_type(p.size(), 0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    row_cell[i] = data_cell(i);
    if (type) row_type[i] = static_cast<std::size_t>(type->codes[i]);
  }
  for (std::size_t ty = 0; ty < q.types; ++ty) {
    detail::append_mark_slots(q.points, dummies.size());
    for (std::size_t k = 0; k < dummies.size(); ++k) {
      q.points.x.push_back(dummies[k].x);
      q.points.y.push_back(dummies[k].y);
      q.points.t.push_back(dummies[k].t);
      q.is_data.push_back(0);
      row_cell.push_back(dummy_cell[k]);
      row_type.push_back(ty);
    }
    if (type)
      for (auto& m : q.points.marks)
        if (m.name == q.type_mark)
          std::fill(m.codes.end() - static_cast<std::ptrdiff_t>(dummies.size()), m.codes.end(), static_cast<int>(ty));
  }
  q.n_dummy = dummies.size() * q.types;
  detail::impute_marks(q.points, q.n_data, p.marks(), q.type_mark, {true, true, true});

  std::vector<std::size_t> counts(n_cells * q.types, 0);
  for (std::size_t r = 0; r < row_cell.size(); ++r) ++counts[row_cell[r] + n_cells * row_type[r]];
  q.weights.resize(row_cell.size());
  for (std::size_t r = 0; r < row_cell.size(); ++r) {
    const std::size_t cell = row_cell[r];
    q.weights[r] = space_cell_volume(cell % n_space) * dt / static_cast<double>(counts[cell + n_cells * row_type[r]]);
  }
  return q;
}

enum class FitMethod { glm, lsr };

inline const char* to_string(FitMethod m) { return m == FitMethod::glm ? "glm" : "lsr"; }

struct FitOptions {
  FitMethod method = FitMethod::glm;
  std::optional<std::array<std::size_t, 3>> nd;
  std::uint64_t seed = 0;
  CovariateSet covariates;
  // Multitype fit: quadrature replicated per level of `type_mark` (the
  // first categorical mark when empty) plus one intercept per type.
  bool marked = false;
  std::string type_mark;
  double ridge = 0.0;  // penalty on the per-type intercept contrasts
  double tol = 1e-8;
  int maxit = 50;
};

struct ConvergenceReport {
  bool converged = false;
  int iterations = 0;
  double deviance = 0.0;
  double score_norm = 0.0;
};

struct QuadratureMeta {
  std::size_t n_data = 0;
  std::size_t n_dummy = 0;
  std::array<std::size_t, 3> nd{};
  double volume = 0.0;
  std::size_t types = 1;
  std::vector<std::string> warnings;
};

struct FittedPoissonModel {
  Formula formula;        // as supplied
  Formula design_formula; // with per-type intercept terms when marked
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::VectorXd std_errors;
  FitMethod method = FitMethod::glm;
  std::vector<double> fitted;  // intensity at the data events
  QuadratureMeta quadrature;
  ConvergenceReport convergence;
  CovariateSet covariates;
  std::vector<MarkColumn> mark_templates;  // level sets used for coding
  bool marked = false;
  std::string type_mark;

  bool homogeneous() const { return design_formula.terms.empty() && design_formula.intercept; }
};

namespace detail {

// Recodes categorical marks of `tab` onto the level sets seen at fit time.
inline PointTable align_marks(PointTable tab, const std::vector<MarkColumn>& templates) {
  for (auto& m : tab.marks) {
    for (const auto& tmpl : templates) {
      if (tmpl.name != m.name || !tmpl.is_categorical() || !m.is_categorical() || tmpl.levels == m.levels) continue;
      std::vector<int> codes(m.codes.size());
      for (std::size_t r = 0; r < m.codes.size(); ++r) {
        const auto& label = m.levels[static_cast<std::size_t>(m.codes[r])];
        auto it = std::find(tmpl.levels.begin(), tmpl.levels.end(), label);
        if (it == tmpl.levels.end()) throw InvalidArgument("mark '" + m.name + "' has unseen level '" + label + "'");
        codes[r] = static_cast<int>(it - tmpl.levels.begin());
      }
      m.codes = std::move(codes);
      m.levels = tmpl.levels;
    }
  }
  return tab;
}

inline std::vector<double> exp_linear(const DesignMatrix& d, const Eigen::VectorXd& coef) {
  const Eigen::VectorXd eta = d.values * coef;
  std::vector<double> out(static_cast<std::size_t>(eta.size()));
  for (Eigen::Index i = 0; i < eta.size(); ++i) out[static_cast<std::size_t>(i)] = std::exp(eta[i]);
  return out;
}

inline void check_formula_names(const Formula& f, const PointTable& tab, const CovariateSet& covs) {
  for (const auto& v : f.variables()) {
    if (v == "x" || v == "y" || v == "t" || tab.mark(v) || covs.count(v)) continue;
    throw InvalidArgument("formula variable '" + v + "' is neither a coordinate, a mark nor a supplied covariate");
  }
}

}  // namespace detail

inline std::vector<double> predict_intensity(const FittedPoissonModel& m, const PointTable& pts) {
  const auto tab = detail::align_marks(pts, m.mark_templates);
  detail::check_formula_names(m.design_formula, tab, m.covariates);
  return detail::exp_linear(build_design(m.design_formula, tab, m.covariates), m.coef);
}

inline std::vector<double> predict_intensity(const FittedPoissonModel& m, const PointPattern& p) {
  return predict_intensity(m, PointTable::from(p));
}

// Poisson process model with log-linear intensity, fitted through the
// quadrature: Berman-Turner weighted Poisson regression (glm) or
// logistic regression of data against dummies (lsr).
inline FittedPoissonModel stppm(const PointPattern& p, const Formula& formula, const FitOptions& opt = {}) {
  FittedPoissonModel model;
  model.formula = formula;
  model.design_formula = formula;
  model.method = opt.method;
  model.covariates = opt.covariates;
  model.mark_templates = p.marks();

  QuadratureOptions qopt{opt.nd, opt.seed, {}};
  if (opt.marked) {
    std::string name = opt.type_mark;
    if (name.empty())
      for (const auto& m : p.marks())
        if (m.is_categorical()) {
          name = m.name;
          break;
        }
    if (name.empty()) throw InvalidArgument("marked fit needs a categorical mark");
    qopt.type_mark = name;
    model.marked = true;
    model.type_mark = name;
    bool has_main = false;
    for (const auto& t : formula.terms)
      has_main |= t.factors.size() == 1 && !t.factors[0].wrapped && t.factors[0].powers[0].name == name;
    if (!has_main) model.design_formula.terms.push_back(Term{{Factor{false, {Power{name, 1}}}}});
  }

  const Quadrature q = make_quadrature(p, qopt);
  detail::check_formula_names(model.design_formula, q.points, opt.covariates);
  const DesignMatrix d = build_design(model.design_formula, q.points, opt.covariates);
  model.names = d.names;

  const auto n = static_cast<Eigen::Index>(q.size());
  Eigen::VectorXd y(n), w(n), off;
  GlmOptions gopt;
  gopt.names = d.names;
  gopt.tol = opt.tol;
  gopt.maxit = opt.maxit;
  if (opt.marked && opt.ridge > 0.0) {
    gopt.ridge.assign(d.names.size(), 0.0);
    for (std::size_t c = 0; c < d.names.size(); ++c)
      if (d.names[c].rfind(model.type_mark, 0) == 0 && d.names[c].find(':') == std::string::npos) gopt.ridge[c] = opt.ridge;
  }
  GlmFit g;
  if (opt.method == FitMethod::glm) {
    for (Eigen::Index k = 0; k < n; ++k) {
      w[k] = q.weights[static_cast<std::size_t>(k)];
      y[k] = q.is_data[static_cast<std::size_t>(k)] ? 1.0 / w[k] : 0.0;
    }
    g = fit_glm(d.values, y, w, off, Family::poisson_log, gopt);
  } else {
    const double rho = static_cast<double>(q.n_dummy / q.types) / q.volume;
    off = Eigen::VectorXd::Constant(n, -std::log(rho));
    w.setOnes();
    for (Eigen::Index k = 0; k < n; ++k) y[k] = q.is_data[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
    g = fit_glm(d.values, y, w, off, Family::binomial_logit, gopt);
  }
  model.coef = g.coef;
  model.std_errors = g.std_errors;
  model.convergence = {g.converged, g.iterations, g.deviance, g.score_norm};
  model.quadrature = {q.n_data, q.n_dummy, q.nd, q.volume, q.types, q.warnings};
  model.fitted = predict_intensity(model, p);
  return model;
}

inline FittedPoissonModel stppm(const PointPattern& p, const std::string& formula, const FitOptions& opt = {}) {
  return stppm(p, parse_formula(formula), opt);
}

// ---------------------------------------------------------------------------
// Separable models: lambda(x, y, t) = c * lambda_s(x, y) * lambda_t(t).

struct MarginalFit {
  Formula formula;
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::VectorXd std_errors;
  ConvergenceReport convergence;
  double integral = 0.0;  // quadrature estimate of the fitted mass
  std::size_t n_dummy = 0;
};

struct SeparableFit {
  MarginalFit space;
  MarginalFit time;
  double normalization = 1.0;
  std::size_t n = 0;
  SpatialWindow window;
  TimeInterval interval;
  CovariateSet covariates;
  std::vector<MarkColumn> mark_templates;
  std::vector<double> fitted;

  // log lambda at each row.
  std::vector<double> log_intensity(const PointTable& pts) const {
    const double xm = 0.5 * (window.x0 + window.x1), ym = 0.5 * (window.y0 + window.y1);
    const double tm = 0.5 * (interval.t0 + interval.t1);
    PointTable sp = detail::align_marks(pts, mark_templates), tp = sp;
    std::fill(sp.t.begin(), sp.t.end(), tm);
    std::fill(tp.x.begin(), tp.x.end(), xm);
    std::fill(tp.y.begin(), tp.y.end(), ym);
    const Eigen::VectorXd es = build_design(space.formula, sp, covariates).values * space.coef;
    const Eigen::VectorXd et = build_design(time.formula, tp, covariates).values * time.coef;
    std::vector<double> out(pts.size());
    const double lc = std::log(normalization);
    for (std::size_t i = 0; i < pts.size(); ++i)
      out[i] = lc + es[static_cast<Eigen::Index>(i)] + et[static_cast<Eigen::Index>(i)];
    return out;
  }
  std::vector<double> intensity(const PointTable& pts) const {
    auto v = log_intensity(pts);
    for (auto& e : v) e = std::exp(e);
    return v;
  }
};

struct SeparableOptions {
  std::optional<std::array<std::size_t, 3>> nd;
  std::uint64_t seed = 0;
  CovariateSet covariates;
};

inline SeparableFit sep_fit(const PointPattern& p, const Formula& space_formula, const Formula& time_formula,
                            const SeparableOptions& opt = {}) {
  if (p.empty()) throw InvalidArgument("sep_fit: empty pattern");
  if (space_formula.uses("t")) throw InvalidArgument("spatial formula may not reference t");
  if (time_formula.uses("x") || time_formula.uses("y")) throw InvalidArgument("temporal formula may not reference x or y");

  SeparableFit out;
  out.n = p.size();
  out.window = p.window();
  out.interval = p.interval();
  out.covariates = opt.covariates;
  out.mark_templates = p.marks();

  // Full quadrature supplies the spatial and temporal dummy layouts.
  QuadratureOptions qopt{opt.nd, opt.seed, {}};
  const Quadrature q = make_quadrature(p, qopt);
  const std::size_t nx = q.nd[0], ny = q.nd[1], nt = q.nd[2];
  const double xm = 0.5 * (p.window().x0 + p.window().x1), ym = 0.5 * (p.window().y0 + p.window().y1);
  const double tm = 0.5 * (p.interval().t0 + p.interval().t1);
  const std::size_t n = p.size();

  auto fit_marginal = [&](const Formula& f, PointTable tab, const std::vector<std::size_t>& cell,
                          const std::vector<double>& cell_volume, MarginalFit& mf) {
    detail::check_formula_names(f, tab, opt.covariates);
    std::vector<std::size_t> counts(cell_volume.size(), 0);
    for (std::size_t c : cell) ++counts[c];
    const auto rows = static_cast<Eigen::Index>(tab.size());
    Eigen::VectorXd w(rows), y(rows);
    for (Eigen::Index k = 0; k < rows; ++k) {
      const std::size_t c = cell[static_cast<std::size_t>(k)];
      w[k] = cell_volume[c] / static_cast<double>(counts[c]);
      y[k] = static_cast<std::size_t>(k) < n ? 1.0 / w[k] : 0.0;
    }
    const DesignMatrix d = build_design(f, tab, opt.covariates);
    GlmOptions gopt;
    gopt.names = d.names;
    const GlmFit g = fit_glm(d.values, y, w, Eigen::VectorXd(), Family::poisson_log, gopt);
    mf.formula = f;
    mf.names = d.names;
    mf.coef = g.coef;
    mf.std_errors = g.std_errors;
    mf.convergence = {g.converged, g.iterations, g.deviance, g.score_norm};
    mf.integral = (w.array() * g.mu.array()).sum();
    mf.n_dummy = tab.size() - n;
  };

  const PointTable data = PointTable::from(p);

  // Spatial marginal: one dummy per spatial cell (or arc-length piece).
  {
    PointTable tab = data;
    std::vector<std::size_t> cell;
    std::vector<double> vol;
    if (p.on_network()) {
      const auto& net = *p.network();
      const double target = net.total_length() / static_cast<double>(nx * ny);
      std::vector<std::size_t> first;
      std::vector<std::size_t> per;
      std::vector<std::array<double, 2>> mids;
      for (std::size_t s = 0; s < net.segment_count(); ++s) {
        const auto m = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(net.length(s) / target - 1e-9)));
        first.push_back(vol.size());
        per.push_back(m);
        for (std::size_t k = 0; k < m; ++k) {
          const double len = net.length(s) / static_cast<double>(m);
          const auto pos = net.position({s, (static_cast<double>(k) + 0.5) * len});
          vol.push_back(len);
          mids.push_back({pos.x, pos.y});
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        const auto np = p.network_coords()[i];
        const double plen = net.length(np.segment) / static_cast<double>(per[np.segment]);
        cell.push_back(first[np.segment] + detail::cell_of(np.offset, 0.0, plen, per[np.segment]));
      }
      detail::append_mark_slots(tab, mids.size());
      for (std::size_t c = 0; c < mids.size(); ++c) {
        tab.x.push_back(mids[c][0]);
        tab.y.push_back(mids[c][1]);
        tab.t.push_back(tm);
        cell.push_back(c);
      }
    } else {
      const auto& W = p.window();
      const double cw = W.width() / static_cast<double>(nx), ch = W.height() / static_cast<double>(ny);
      vol.assign(nx * ny, cw * ch);
      for (std::size_t i = 0; i < n; ++i)
        cell.push_back(detail::cell_of(p[i].x, W.x0, cw, nx) + nx * detail::cell_of(p[i].y, W.y0, ch, ny));
      detail::append_mark_slots(tab, nx * ny);
      Rng rng(opt.seed ^ 0x5eed5a11ULL);
      for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) {
          tab.x.push_back(W.x0 + (static_cast<double>(i) + rng.uniform()) * cw);
          tab.y.push_back(W.y0 + (static_cast<double>(j) + rng.uniform()) * ch);
          tab.t.push_back(tm);
          cell.push_back(i + nx * j);
        }
    }
    std::fill(tab.t.begin(), tab.t.end(), tm);
    detail::impute_marks(tab, n, p.marks(), "", {true, true, false});
    fit_marginal(space_formula, std::move(tab), cell, vol, out.space);
  }

  // Temporal marginal: one dummy per time cell.
  {
    PointTable tab = data;
    const auto& iv = p.interval();
    const double dt = iv.length() / static_cast<double>(nt);
    std::vector<std::size_t> cell;
    for (std::size_t i = 0; i < n; ++i) cell.push_back(detail::cell_of(p[i].t, iv.t0, dt, nt));
    std::vector<double> vol(nt, dt);
    detail::append_mark_slots(tab, nt);
    Rng rng(opt.seed ^ 0x7177e5ULL);
    for (std::size_t k = 0; k < nt; ++k) {
      tab.x.push_back(xm);
      tab.y.push_back(ym);
      tab.t.push_back(iv.t0 + (static_cast<double>(k) + rng.uniform()) * dt);
      cell.push_back(k);
    }
    std::fill(tab.x.begin(), tab.x.end(), xm);
    std::fill(tab.y.begin(), tab.y.end(), ym);
    detail::impute_marks(tab, n, p.marks(), "", {false, false, true});
    fit_marginal(time_formula, std::move(tab), cell, vol, out.time);
  }

  // Each marginal integrates to about n, so their product carries n^2.
  out.normalization = static_cast<double>(n) / (out.space.integral * out.time.integral);
  out.fitted = out.intensity(data);
  return out;
}

inline SeparableFit sep_fit(const PointPattern& p, const std::string& space_formula, const std::string& time_formula,
                            const SeparableOptions& opt = {}) {
  return sep_fit(p, parse_formula(space_formula), parse_formula(time_formula), opt);
}

// ---------------------------------------------------------------------------
// Local Poisson models

struct LocalFitOptions {
  std::optional<double> h_space;  // default: Silverman's rule, mean over x and y
  std::optional<double> h_time;   // default: Silverman's rule on t
  std::optional<std::array<std::size_t, 3>> nd;
  std::uint64_t seed = 0;
  CovariateSet covariates;
};

struct LocalPoissonFit {
  std::vector<std::string> names;
  Eigen::MatrixXd coef;  // one row per event
  double h_space = 0.0, h_time = 0.0;
  std::vector<double> fitted;
  std::vector<char> converged;
  FittedPoissonModel global;
};

inline double silverman_bandwidth(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return 1.06 * sd * std::pow(n, -0.2);
}

// One kernel-weighted Berman-Turner fit per event:
//   w_k(i) = w_k exp(-|s_k - s_i|^2 / (2 h_s^2)) exp(-(t_k - t_i)^2 / (2 h_t^2)).
inline LocalPoissonFit locstppm(const PointPattern& p, const Formula& formula, const LocalFitOptions& opt = {}) {
  LocalPoissonFit out;
  FitOptions gopt;
  gopt.nd = opt.nd;
  gopt.seed = opt.seed;
  gopt.covariates = opt.covariates;
  out.global = stppm(p, formula, gopt);
  const std::size_t pcols = out.global.names.size();
  if (p.size() < pcols + 2)
    throw InvalidArgument("locstppm needs at least " + std::to_string(pcols + 2) + " events");

  PointTable data = PointTable::from(p);
  out.h_space = opt.h_space.value_or(0.5 * (silverman_bandwidth(data.x) + silverman_bandwidth(data.y)));
  out.h_time = opt.h_time.value_or(silverman_bandwidth(data.t));
  if (!(out.h_space > 0.0) || !(out.h_time > 0.0)) throw InvalidArgument("locstppm bandwidths must be positive");
  out.names = out.global.names;

  const Quadrature q = make_quadrature(p, QuadratureOptions{opt.nd, opt.seed, {}});
  const DesignMatrix d = build_design(formula, q.points, opt.covariates);
  const DesignMatrix dd = build_design(formula, data, opt.covariates);
  const auto rows = static_cast<Eigen::Index>(q.size());
  Eigen::VectorXd y(rows);
  for (Eigen::Index k = 0; k < rows; ++k)
    y[k] = q.is_data[static_cast<std::size_t>(k)] ? 1.0 / q.weights[static_cast<std::size_t>(k)] : 0.0;

  out.coef = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(p.size()), static_cast<Eigen::Index>(pcols),
                                       std::numeric_limits<double>::quiet_NaN());
  out.fitted.assign(p.size(), std::numeric_limits<double>::quiet_NaN());
  out.converged.assign(p.size(), 0);
  const double hs2 = 2.0 * out.h_space * out.h_space, ht2 = 2.0 * out.h_time * out.h_time;

  parallel_for(p.size(), [&](std::size_t i) {
    Eigen::VectorXd w(rows);
    for (Eigen::Index k = 0; k < rows; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const double ds = (q.points.x[kk] - p[i].x) * (q.points.x[kk] - p[i].x) +
                        (q.points.y[kk] - p[i].y) * (q.points.y[kk] - p[i].y);
      const double dtt = (q.points.t[kk] - p[i].t) * (q.points.t[kk] - p[i].t);
      w[k] = std::max(q.weights[kk] * std::exp(-ds / hs2) * std::exp(-dtt / ht2), 1e-300);
    }
    GlmOptions g;
    g.names = d.names;
    g.start = out.global.coef;
    try {
      const GlmFit f = fit_glm(d.values, y, w, Eigen::VectorXd(), Family::poisson_log, g);
      out.coef.row(static_cast<Eigen::Index>(i)) = f.coef.transpose();
      out.fitted[i] = std::exp(dd.values.row(static_cast<Eigen::Index>(i)).dot(f.coef));
      out.converged[i] = 1;
    } catch (const ConvergenceError&) {
    }
  });
  return out;
}

inline LocalPoissonFit locstppm(const PointPattern& p, const std::string& formula, const LocalFitOptions& opt = {}) {
  return locstppm(p, parse_formula(formula), opt);
}

}  // namespace stpp
