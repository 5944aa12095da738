#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stpp/error.hpp"
#include "stpp/fit.hpp"
#include "stpp/optimize.hpp"
#include "stpp/parallel.hpp"
#include "stpp/pattern.hpp"
#include "stpp/random.hpp"
#include "stpp/summaries.hpp"

namespace stpp {

enum class CovarianceFamily { separable_exponential, gneiting, iaco_cesare };

inline const char* to_string(CovarianceFamily f) {
  switch (f) {
    case CovarianceFamily::separable_exponential: return "separable-exponential";
    case CovarianceFamily::gneiting: return "gneiting";
    case CovarianceFamily::iaco_cesare: return "iaco-cesare";
  }
  return "?";
}

inline CovarianceFamily parse_covariance_family(const std::string& s) {
  if (s == "separable-exponential" || s == "sep-exp" || s == "separable") return CovarianceFamily::separable_exponential;
  if (s == "gneiting") return CovarianceFamily::gneiting;
  if (s == "iaco-cesare" || s == "cesare") return CovarianceFamily::iaco_cesare;
  throw InvalidArgument("unknown covariance family '" + s + "'");
}

struct CovarianceModel {
  CovarianceFamily family = CovarianceFamily::separable_exponential;
  double sigma = 1.0, alpha = 1.0, beta = 1.0;
  double delta = 1.0;                           // gneiting
  double kappa1 = 2.0, kappa2 = 2.0, kappa3 = 1.5;  // iaco-cesare

  void validate() const {
    if (!(sigma > 0.0) || !(alpha > 0.0) || !(beta > 0.0))
      throw InvalidArgument(std::string(to_string(family)) + ": sigma, alpha and beta must be positive");
    if (delta < 0.0 || delta > 1.0) throw InvalidArgument("gneiting delta must lie in [0, 1]");
  }
};

inline double cov_eval(const CovarianceModel& m, double r, double h) {
  if (r < 0.0 || h < 0.0) throw InvalidArgument("cov_eval: negative lag");
  const double s2 = m.sigma * m.sigma;
  switch (m.family) {
    case CovarianceFamily::separable_exponential:
      return s2 * std::exp(-r / m.alpha) * std::exp(-h / m.beta);
    case CovarianceFamily::gneiting: {
      const double psi = 1.0 + h / m.beta;
      return s2 / psi * std::exp(-(r / m.alpha) / std::pow(psi, 0.5 * m.delta));
    }
    case CovarianceFamily::iaco_cesare:
      return s2 * std::pow(1.0 + std::pow(r / m.alpha, m.kappa1) + std::pow(h / m.beta, m.kappa2), -m.kappa3);
  }
  return 0.0;
}

inline double lgcp_pcf(const CovarianceModel& m, double r, double h) { return std::exp(cov_eval(m, r, h)); }

struct MinContrastOptions {
  double q = 0.5;
  std::optional<Eigen::MatrixXd> weights;  // r x h, default all ones
  std::optional<std::array<double, 3>> init;  // (sigma, alpha, beta)
  double xtol = 1e-8;
  int max_iter = 5000;
  std::uint64_t seed = 0x6c67;
};

struct MinContrastResult {
  CovarianceModel model;
  double contrast = 0.0;
  int iterations = 0;
  bool boundary = false;  // sigma collapsed or a range parameter ran to its limit
};

// argmin over (log sigma, log alpha, log beta) of
//   sum_kl w_kl (ghat_kl^q - g(r_k, h_l)^q)^2.
inline MinContrastResult min_contrast(const std::vector<double>& r, const std::vector<double>& h,
                                      const Eigen::MatrixXd& ghat, CovarianceModel family_template,
                                      const MinContrastOptions& opt = {}) {
  const auto nr = static_cast<Eigen::Index>(r.size()), nh = static_cast<Eigen::Index>(h.size());
  if (nr == 0 || nh == 0 || ghat.rows() != nr || ghat.cols() != nh)
    throw InvalidArgument("min_contrast: surface does not match the lag grids");
  for (Eigen::Index a = 0; a < nr; ++a)
    for (Eigen::Index b = 0; b < nh; ++b)
      if (!(ghat(a, b) >= 0.0)) throw InvalidArgument("min_contrast: pcf estimate must be nonnegative");
  const Eigen::MatrixXd w = opt.weights.value_or(Eigen::MatrixXd::Ones(nr, nh));
  if (w.rows() != nr || w.cols() != nh) throw InvalidArgument("min_contrast: weight matrix has the wrong shape");

  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  };
  const std::array<double, 3> init = opt.init.value_or(std::array<double, 3>{1.0, median(r), median(h)});

  // Box on the log scale keeps degenerate directions finite.
  const std::array<double, 3> lo{std::log(1e-4), std::log(r.front() * 1e-3), std::log(h.front() * 1e-3)};
  const std::array<double, 3> hi{std::log(1e2), std::log(r.back() * 1e3), std::log(h.back() * 1e3)};

  Eigen::MatrixXd target(nr, nh);
  for (Eigen::Index a = 0; a < nr; ++a)
    for (Eigen::Index b = 0; b < nh; ++b) target(a, b) = std::pow(ghat(a, b), opt.q);

  auto model_at = [&](const Eigen::VectorXd& z) {
    CovarianceModel m = family_template;
    m.sigma = std::exp(std::clamp(z[0], lo[0], hi[0]));
    m.alpha = std::exp(std::clamp(z[1], lo[1], hi[1]));
    m.beta = std::exp(std::clamp(z[2], lo[2], hi[2]));
    return m;
  };
  auto objective = [&](const Eigen::VectorXd& z) {
    const CovarianceModel m = model_at(z);
    double s = 0.0;
    for (Eigen::Index a = 0; a < nr; ++a)
      for (Eigen::Index b = 0; b < nh; ++b) {
        const double d = target(a, b) - std::exp(opt.q * cov_eval(m, r[static_cast<std::size_t>(a)], h[static_cast<std::size_t>(b)]));
        s += w(a, b) * d * d;
      }
    // Outside the box the clamped model is constant; tilt it back inwards.
    for (int k = 0; k < 3; ++k) {
      const double out = std::max(z[k] - hi[static_cast<std::size_t>(k)], 0.0) +
                         std::max(lo[static_cast<std::size_t>(k)] - z[k], 0.0);
      s += out * out;
    }
    return s;
  };

  Eigen::VectorXd z0(3);
  z0 << std::log(init[0]), std::log(init[1]), std::log(init[2]);
  NelderMeadOptions nm;
  nm.xtol = opt.xtol;
  nm.max_iter = opt.max_iter;
  nm.seed = opt.seed;
  const auto res = nelder_mead(objective, z0, nm);

  MinContrastResult out;
  out.model = model_at(res.x);
  out.contrast = res.value;
  out.iterations = res.iterations;
  for (int k = 0; k < 3; ++k)
    out.boundary |= res.x[k] <= lo[static_cast<std::size_t>(k)] + 1e-3 || res.x[k] >= hi[static_cast<std::size_t>(k)] - 1e-3;
  out.boundary |= out.model.sigma < 1e-3;
  return out;
}

inline MinContrastResult min_contrast(const SummarySurface& ghat, CovarianceModel family_template,
                                      const MinContrastOptions& opt = {}) {
  return min_contrast(ghat.r, ghat.h, ghat.estimate, family_template, opt);
}

// ---------------------------------------------------------------------------

enum class Order { global, local };

inline const char* to_string(Order o) { return o == Order::global ? "global" : "local"; }

struct LgcpOptions {
  Order first = Order::global;
  Order second = Order::global;
  CovarianceModel family;  // parameters ignored; extras (delta, kappa) used
  std::optional<SummaryConfig> summary;  // default: pcf on the default grid
  std::optional<std::array<std::size_t, 3>> nd;
  std::uint64_t seed = 0;
  CovariateSet covariates;
  std::optional<double> h_space, h_time;  // local first order
  MinContrastOptions contrast;
};

struct LgcpFit {
  Order first = Order::global, second = Order::global;
  CovarianceFamily family = CovarianceFamily::separable_exponential;
  std::vector<std::string> names;
  Eigen::VectorXd coef;          // global first order
  Eigen::MatrixXd coef_local;    // n x p, local first order
  std::vector<double> intensity; // fitted at the events
  std::array<double, 3> params{};  // global second order
  Eigen::MatrixXd params_local;  // n x 3, NaN rows where the optimiser failed
  double contrast = 0.0;
  std::vector<double> contrast_local;
  std::vector<char> local_ok;
  bool boundary = false;
  SummarySurface pcf;  // global pcf estimate
  double elapsed_seconds = 0.0;
  std::size_t n = 0;
};

inline LgcpFit stlgcppm(const PointPattern& p, const Formula& formula, const LgcpOptions& opt = {}) {
  const auto started = std::chrono::steady_clock::now();
  if (p.size() < 10) throw InvalidArgument("stlgcppm needs at least 10 events");
  LgcpFit out;
  out.first = opt.first;
  out.second = opt.second;
  out.family = opt.family.family;
  out.n = p.size();

  if (opt.first == Order::global) {
    FitOptions fo;
    fo.nd = opt.nd;
    fo.seed = opt.seed;
    fo.covariates = opt.covariates;
    const auto m = stppm(p, formula, fo);
    out.names = m.names;
    out.coef = m.coef;
    out.intensity = m.fitted;
  } else {
    LocalFitOptions lo;
    lo.nd = opt.nd;
    lo.seed = opt.seed;
    lo.covariates = opt.covariates;
    lo.h_space = opt.h_space;
    lo.h_time = opt.h_time;
    const auto lf = locstppm(p, formula, lo);
    out.names = lf.names;
    out.coef = lf.global.coef;
    out.coef_local = lf.coef;
    out.intensity = lf.fitted;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (!std::isfinite(out.intensity[i])) out.intensity[i] = lf.global.fitted[i];
  }

  SummaryConfig cfg = opt.summary.value_or(default_summary_config(p, Statistic::g));
  cfg.statistic = Statistic::g;
  out.pcf = second_order_global(p, out.intensity, cfg);

  if (opt.second == Order::global) {
    const auto mc = min_contrast(out.pcf, opt.family, opt.contrast);
    out.params = {mc.model.sigma, mc.model.alpha, mc.model.beta};
    out.contrast = mc.contrast;
    out.boundary = mc.boundary;
  } else {
    const auto lista = second_order_local(p, out.intensity, cfg);
    const auto n = static_cast<Eigen::Index>(p.size());
    out.params_local = Eigen::MatrixXd::Constant(n, 3, std::numeric_limits<double>::quiet_NaN());
    out.contrast_local.assign(p.size(), std::numeric_limits<double>::quiet_NaN());
    out.local_ok.assign(p.size(), 0);
    parallel_for(p.size(), [&](std::size_t i) {
      try {
        Eigen::MatrixXd g = lista.surfaces[i].estimate.cwiseMax(0.0);
        const auto mc = min_contrast(cfg.r, cfg.h, g, opt.family, opt.contrast);
        out.params_local.row(static_cast<Eigen::Index>(i)) << mc.model.sigma, mc.model.alpha, mc.model.beta;
        out.contrast_local[i] = mc.contrast;
        out.local_ok[i] = 1;
      } catch (const ConvergenceError&) {
      }
    });
  }
  out.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

inline LgcpFit stlgcppm(const PointPattern& p, const std::string& formula, const LgcpOptions& opt = {}) {
  return stlgcppm(p, parse_formula(formula), opt);
}

// ---------------------------------------------------------------------------

struct LgcpSimOptions {
  SpatialWindow window{0.0, 1.0, 0.0, 1.0};
  TimeInterval interval{0.0, 1.0};
  std::array<std::size_t, 3> grid{12, 12, 8};
};

struct LgcpSimInfo {
  Eigen::VectorXd field;  // S at the cell centres, x fastest then y then t
};

// Grid Gaussian field with mean -sigma^2/2 (so E exp S = 1), dense Cholesky
// with a 1e-8 sigma^2 nugget, Poisson counts per cell, uniform placement.
inline PointPattern sim_lgcp(const CovarianceModel& model, double lambda0, std::uint64_t seed,
                             const LgcpSimOptions& opt = {}, LgcpSimInfo* info = nullptr) {
  model.validate();
  opt.window.validate();
  opt.interval.validate();
  if (!(lambda0 > 0.0)) throw InvalidArgument("sim_lgcp: baseline intensity must be positive");
  const auto [gx, gy, gt] = opt.grid;
  const std::size_t cells = gx * gy * gt;
  if (cells == 0 || cells > 5000) throw InvalidArgument("sim_lgcp: grid must have between 1 and 5000 cells");
  const double cw = opt.window.width() / static_cast<double>(gx);
  const double ch = opt.window.height() / static_cast<double>(gy);
  const double ct = opt.interval.length() / static_cast<double>(gt);

  std::vector<std::array<double, 3>> centre(cells);
  for (std::size_t k = 0; k < gt; ++k)
    for (std::size_t j = 0; j < gy; ++j)
      for (std::size_t i = 0; i < gx; ++i)
        centre[i + gx * (j + gy * k)] = {opt.window.x0 + (static_cast<double>(i) + 0.5) * cw,
                                         opt.window.y0 + (static_cast<double>(j) + 0.5) * ch,
                                         opt.interval.t0 + (static_cast<double>(k) + 0.5) * ct};
  const auto N = static_cast<Eigen::Index>(cells);
  Eigen::MatrixXd C(N, N);
  for (Eigen::Index a = 0; a < N; ++a)
    for (Eigen::Index b = 0; b <= a; ++b) {
      const auto& u = centre[static_cast<std::size_t>(a)];
      const auto& v = centre[static_cast<std::size_t>(b)];
      C(a, b) = C(b, a) = cov_eval(model, std::hypot(u[0] - v[0], u[1] - v[1]), std::abs(u[2] - v[2]));
    }
  const double s2 = model.sigma * model.sigma;
  C.diagonal().array() += 1e-8 * s2;
  Eigen::LLT<Eigen::MatrixXd> llt(C);
  if (llt.info() != Eigen::Success)
    throw InvalidArgument(std::string("sim_lgcp: covariance matrix of the ") + to_string(model.family) +
                          " family is not positive definite (sigma=" + std::to_string(model.sigma) +
                          ", alpha=" + std::to_string(model.alpha) + ", beta=" + std::to_string(model.beta) + ")");

  Rng rng(seed);
  Eigen::VectorXd z(N);
  for (Eigen::Index a = 0; a < N; ++a) z[a] = rng.normal();
  Eigen::VectorXd S = llt.matrixL() * z;
  S.array() -= 0.5 * s2;

  const double cell_volume = cw * ch * ct;
  std::vector<Event> events;
  for (std::size_t c = 0; c < cells; ++c) {
    const auto count = rng.poisson(lambda0 * std::exp(S[static_cast<Eigen::Index>(c)]) * cell_volume);
    for (std::uint64_t m = 0; m < count; ++m) {
      Event e;
      e.x = centre[c][0] + (rng.uniform() - 0.5) * cw;
      e.y = centre[c][1] + (rng.uniform() - 0.5) * ch;
      e.t = centre[c][2] + (rng.uniform() - 0.5) * ct;
      events.push_back(e);
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  if (info) info->field = S;
  PatternOptions po;
  po.window = opt.window;
  po.interval = opt.interval;
  return PointPattern::make(std::move(events), {}, po);
}

}  // namespace stpp
