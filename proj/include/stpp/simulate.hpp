#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "stpp/error.hpp"
#include "stpp/expression.hpp"
#include "stpp/formula.hpp"
#include "stpp/pattern.hpp"
#include "stpp/random.hpp"

namespace stpp {

// Observation domain of a simulation: a rectangle or a network, times an
// interval.
struct Domain {
  SpatialWindow window;
  TimeInterval interval;
  std::shared_ptr<const LinearNetwork> network;

  static Domain planar(SpatialWindow w, TimeInterval iv) {
    w.validate();
    iv.validate();
    return {w, iv, nullptr};
  }
  static Domain on_network(std::shared_ptr<const LinearNetwork> net, TimeInterval iv) {
    iv.validate();
    Domain d;
    d.network = std::move(net);
    d.interval = iv;
    const auto b = d.network->bounding_box();
    d.window = {b.x0, b.x1, b.y0, b.y1};
    return d;
  }
  static Domain of(const PointPattern& p) { return {p.window(), p.interval(), p.network()}; }

  double spatial_measure() const { return network ? network->total_length() : window.area(); }
  double volume() const { return spatial_measure() * interval.length(); }

  PatternOptions pattern_options() const {
    PatternOptions o;
    o.interval = interval;
    o.network = network;
    if (!network) o.window = window;
    return o;
  }
};

// First-order intensity used by the simulators: a constant, an arithmetic
// expression with parameters and covariates, or an arbitrary callable.
class IntensitySpec {
 public:
  using Fn = std::function<double(double, double, double)>;

  static IntensitySpec constant(double lambda) {
    IntensitySpec s;
    s.constant_ = lambda;
    return s;
  }
  static IntensitySpec expression(Expression e, std::vector<double> par = {}, CovariateSet covs = {}) {
    IntensitySpec s;
    auto shared = std::make_shared<std::pair<std::vector<double>, CovariateSet>>(std::move(par), std::move(covs));
    s.fn_ = [e = std::move(e), shared](double x, double y, double t) {
      Expression::Env env{x, y, t, shared->first, {}};
      env.lookup = [&](const std::string& name, double xx, double yy, double tt) {
        auto it = shared->second.find(name);
        if (it == shared->second.end()) throw InvalidArgument("unknown covariate '" + name + "' in intensity");
        return it->second->lookup_nearest(xx, yy, tt);
      };
      return e(env);
    };
    return s;
  }
  static IntensitySpec function(Fn fn) {
    IntensitySpec s;
    s.fn_ = std::move(fn);
    return s;
  }

  bool is_constant() const { return !fn_; }
  double operator()(double x, double y, double t) const { return fn_ ? fn_(x, y, t) : constant_; }

 private:
  double constant_ = 0.0;
  Fn fn_;
};

struct PoissonSimOptions {
  // Evaluation grid per axis for the intensity bound (planar: n^3 nodes;
  // network: 16n arc-length samples by n times).
  std::size_t bound_grid = 32;
  double bound_inflation = 1.2;
};

struct PoissonSimInfo {
  double lambda_max = 0.0;
  std::size_t proposed = 0;
  bool zero_intensity = false;
  // Proposals whose intensity exceeded lambda_max (the bound was too low).
  std::size_t bound_violations = 0;
};

namespace detail {

inline double intensity_bound(const IntensitySpec& lambda, const Domain& dom, const PoissonSimOptions& opt) {
  if (lambda.is_constant()) {
    const double v = lambda(0, 0, 0);
    if (v < 0.0 || !std::isfinite(v)) throw InvalidArgument("intensity must be finite and non-negative");
    return v;
  }
  const std::size_t n = std::max<std::size_t>(opt.bound_grid, 2);
  double best = 0.0;
  auto visit = [&](double x, double y, double t) {
    const double v = lambda(x, y, t);
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InvalidArgument("intensity is negative or non-finite at (" + std::to_string(x) + ", " +
                            std::to_string(y) + ", " + std::to_string(t) + ")");
    best = std::max(best, v);
  };
  const auto& iv = dom.interval;
  auto tk = [&](std::size_t k) { return iv.t0 + iv.length() * static_cast<double>(k) / static_cast<double>(n - 1); };
  if (dom.network) {
    const std::size_t ns = 16 * n;
    for (std::size_t s = 0; s < ns; ++s) {
      const auto p = dom.network->position(
          dom.network->point_at_arclength(dom.network->total_length() * static_cast<double>(s) / static_cast<double>(ns - 1)));
      for (std::size_t k = 0; k < n; ++k) visit(p.x, p.y, tk(k));
    }
  } else {
    const auto& w = dom.window;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k)
          visit(w.x0 + w.width() * static_cast<double>(i) / static_cast<double>(n - 1),
                w.y0 + w.height() * static_cast<double>(j) / static_cast<double>(n - 1), tk(k));
  }
  return best * opt.bound_inflation;
}

inline Event uniform_event(const Domain& dom, Rng& rng) {
  Event e;
  if (dom.network) {
    const auto p = dom.network->position(dom.network->uniform_point(rng));
    e.x = p.x;
    e.y = p.y;
  } else {
    e.x = rng.uniform(dom.window.x0, dom.window.x1);
    e.y = rng.uniform(dom.window.y0, dom.window.y1);
  }
  e.t = rng.uniform(dom.interval.t0, dom.interval.t1);
  return e;
}

}  // namespace detail

// Poisson process by thinning a dominating homogeneous process.
inline PointPattern sim_poisson(const IntensitySpec& lambda, const Domain& dom, std::uint64_t seed,
                                const PoissonSimOptions& opt = {}, PoissonSimInfo* info = nullptr) {
  PoissonSimInfo local;
  Rng rng(seed);
  const double lmax = detail::intensity_bound(lambda, dom, opt);
  local.lambda_max = lmax;
  std::vector<Event> events;
  if (lmax <= 0.0) {
    local.zero_intensity = true;
  } else {
    const std::uint64_t n = rng.poisson(lmax * dom.volume());
    local.proposed = n;
    events.reserve(lambda.is_constant() ? n : n / 2);
    for (std::uint64_t k = 0; k < n; ++k) {
      const Event e = detail::uniform_event(dom, rng);
      if (lambda.is_constant()) {
        events.push_back(e);
        continue;
      }
      const double v = lambda(e.x, e.y, e.t);
      if (v > lmax) ++local.bound_violations;
      if (rng.uniform() * lmax < v) events.push_back(e);
    }
  }
  if (info) *info = local;
  return PointPattern::make(std::move(events), {}, dom.pattern_options());
}

// ---------------------------------------------------------------------------
// ETAS

struct EtasParams {
  double mu = 0.0;    // background events per unit space-time volume
  double k0 = 0.0;    // productivity
  double c = 0.01;    // Omori offset
  double p = 1.2;     // Omori exponent, > 1
  double d = 1.0;     // squared spatial scale
  double q = 1.5;     // spatial exponent, > 1
  double beta = 0.5;  // magnitude effect on productivity
  double m0 = 2.5;    // magnitude threshold
  double b = 1.0;     // Gutenberg-Richter slope

  void validate() const {
    if (!(mu >= 0.0) || !(k0 >= 0.0) || !(c > 0.0) || !(p > 1.0) || !(d > 0.0) || !(q > 1.0) || !(b > 0.0))
      throw InvalidArgument("ETAS parameters need mu >= 0, k0 >= 0, c > 0, p > 1, d > 0, q > 1, b > 0");
  }

  double temporal_integral() const { return std::pow(c, 1.0 - p) / (p - 1.0); }
  double spatial_integral() const { return std::numbers::pi * std::pow(d, 1.0 - q) / (q - 1.0); }

  // Expected number of direct offspring of an event of magnitude m.
  double productivity(double m) const { return k0 * std::exp(beta * m) * temporal_integral() * spatial_integral(); }

  // Mean productivity over the magnitude law (+inf when it diverges).
  double branching_ratio() const {
    const double rate = b * std::numbers::ln10;
    if (beta >= rate) return std::numeric_limits<double>::infinity();
    return k0 * temporal_integral() * spatial_integral() * std::exp(beta * m0) * rate / (rate - beta);
  }
};

// Lag with density proportional to (tau + c)^-p on [0, inf).
inline double sample_omori_lag(Rng& rng, double c, double p) {
  return c * (std::pow(rng.uniform_pos(), 1.0 / (1.0 - p)) - 1.0);
}
inline double omori_cdf(double tau, double c, double p) { return 1.0 - std::pow(1.0 + tau / c, 1.0 - p); }

// Distance with planar density proportional to (r^2 + d)^-q.
inline double sample_radial_distance(Rng& rng, double d, double q) {
  return std::sqrt(d * std::pow(rng.uniform_pos(), -1.0 / (q - 1.0)) - d);
}
inline double radial_cdf(double r, double d, double q) { return 1.0 - std::pow(1.0 + r * r / d, 1.0 - q); }

struct EtasOptions {
  std::size_t max_generations = 10000;
  std::size_t max_events = 10000000;
  // Refuse parameter sets whose branching ratio is >= 1.
  bool require_subcritical = true;
};

struct EtasStats {
  std::size_t background = 0;
  std::size_t parents = 0;    // events whose offspring were drawn
  std::size_t offspring = 0;  // offspring drawn, before domain filtering
  std::size_t generations = 0;
  double branching_ratio = 0.0;
};

// Branching simulation of the ETAS process with conditional intensity
//   mu + sum_i k0 exp(beta m_i) (t - t_i + c)^-p ((x - x_i)^2 + (y - y_i)^2 + d)^-q.
// Result marks: "magnitude" and "generation" (0 = background). Events are
// sorted by time.
inline PointPattern sim_etas(const EtasParams& par, const Domain& dom, std::uint64_t seed, const EtasOptions& opt = {},
                             EtasStats* stats = nullptr) {
  par.validate();
  EtasStats st;
  st.branching_ratio = par.branching_ratio();
  if (opt.require_subcritical && !(st.branching_ratio < 1.0))
    throw InvalidArgument("ETAS parameters are not subcritical: branching ratio " +
                          std::to_string(st.branching_ratio) + " >= 1");

  struct Ev {
    double x, y, t, m;
    std::size_t gen;
    NetworkPoint where;
  };
  Rng rng(seed);
  const double rate = par.b * std::numbers::ln10;
  auto magnitude = [&] { return par.m0 + rng.exponential(rate); };

  std::vector<Ev> all;
  std::vector<Ev> current;
  const std::uint64_t nb = rng.poisson(par.mu * dom.volume());
  st.background = nb;
  for (std::uint64_t k = 0; k < nb; ++k) {
    Ev e{};
    if (dom.network) {
      e.where = dom.network->uniform_point(rng);
      const auto p = dom.network->position(e.where);
      e.x = p.x;
      e.y = p.y;
    } else {
      e.x = rng.uniform(dom.window.x0, dom.window.x1);
      e.y = rng.uniform(dom.window.y0, dom.window.y1);
    }
    e.t = rng.uniform(dom.interval.t0, dom.interval.t1);
    e.m = magnitude();
    e.gen = 0;
    current.push_back(e);
  }

  const auto box = dom.network ? dom.network->bounding_box() : LinearNetwork::Box{};
  std::size_t gen = 0;
  while (!current.empty()) {
    if (gen >= opt.max_generations)
      throw ConvergenceError("ETAS cascade exceeded " + std::to_string(opt.max_generations) +
                             " generations; parameters are not subcritical (branching ratio " +
                             std::to_string(st.branching_ratio) + ")");
    ++gen;
    std::vector<Ev> next;
    for (const Ev& parent : current) {
      ++st.parents;
      const std::uint64_t kids = rng.poisson(par.productivity(parent.m));
      st.offspring += kids;
      for (std::uint64_t k = 0; k < kids; ++k) {
        const double tau = sample_omori_lag(rng, par.c, par.p);
        const double r = sample_radial_distance(rng, par.d, par.q);
        const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        Ev child{parent.x + r * std::cos(theta), parent.y + r * std::sin(theta), parent.t + tau, magnitude(), gen, {}};
        // Later offspring can only produce even later events.
        if (child.t > dom.interval.t1) continue;
        if (dom.network) {
          if (child.x < box.x0 || child.x > box.x1 || child.y < box.y0 || child.y > box.y1) continue;
          child.where = dom.network->project({child.x, child.y}).point;
          const auto s = dom.network->position(child.where);
          child.x = s.x;
          child.y = s.y;
        }
        next.push_back(child);
      }
    }
    for (auto& e : current) all.push_back(e);
    if (all.size() + next.size() > opt.max_events)
      throw ConvergenceError("ETAS cascade exceeded " + std::to_string(opt.max_events) + " events");
    current = std::move(next);
  }
  st.generations = gen;

  std::vector<Ev> kept;
  for (const auto& e : all) {
    if (!dom.interval.contains(e.t)) continue;
    if (!dom.network && !dom.window.contains(e.x, e.y)) continue;
    kept.push_back(e);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Ev& a, const Ev& b) { return a.t < b.t; });

  std::vector<Event> events;
  std::vector<double> mags, gens;
  for (const auto& e : kept) {
    events.push_back({e.x, e.y, e.t});
    mags.push_back(e.m);
    gens.push_back(static_cast<double>(e.gen));
  }
  if (stats) *stats = st;
  std::vector<MarkColumn> marks{MarkColumn::continuous("magnitude", std::move(mags)),
                                MarkColumn::continuous("generation", std::move(gens))};
  return PointPattern::make(std::move(events), std::move(marks), dom.pattern_options());
}

}  // namespace stpp
