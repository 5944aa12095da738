#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stpp/error.hpp"
#include "stpp/parallel.hpp"
#include "stpp/pattern.hpp"
#include "stpp/random.hpp"
#include "stpp/summaries.hpp"

namespace stpp {

struct LocalTestOptions {
  Statistic method = Statistic::K;
  std::size_t k = 99;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  std::optional<SummaryConfig> summary;
};

struct LocalTestResult {
  std::vector<double> p_values;
  std::vector<std::size_t> significant;  // 0-based ids into X
  std::size_t k = 0;
  double alpha = 0.05;
  Statistic method = Statistic::K;
  std::size_t n_x = 0, n_z = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline double squared_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).squaredNorm(); }

inline void require_same_domain(const PointPattern& x, const PointPattern& z) {
  if (!(x.window() == z.window()) || !(x.interval() == z.interval()))
    throw InvalidArgument("patterns X and Z must share the window and time interval");
  if (x.network() != z.network()) throw InvalidArgument("patterns X and Z must lie on the same network");
}

}  // namespace detail

// Permutation test of each x_i's local surface in X against surfaces of x_i
// placed among random subsets of Z. p_i = (1 + #{j: T_i^(j) >= T_i}) / (k + 1).
inline LocalTestResult localtest(const PointPattern& X, const PointPattern& Z, const LocalTestOptions& opt = {}) {
  detail::require_same_domain(X, Z);
  if (X.empty()) throw InvalidArgument("localtest: X has no events");
  if (Z.size() < 2) throw InvalidArgument("localtest: Z needs at least 2 events");
  if (opt.k < 1) throw InvalidArgument("localtest: k must be at least 1");
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw InvalidArgument("localtest: alpha must lie in (0, 1)");

  LocalTestResult out;
  out.k = opt.k;
  out.alpha = opt.alpha;
  out.method = opt.method;
  out.n_x = X.size();
  out.n_z = Z.size();
  if (1.0 / static_cast<double>(opt.k + 1) > opt.alpha)
    out.warnings.push_back("smallest attainable p-value 1/(k+1) = " + std::to_string(1.0 / static_cast<double>(opt.k + 1)) +
                           " exceeds alpha; no point can be significant (use k >= 99)");

  SummaryConfig cfg = opt.summary.value_or(default_summary_config(X, opt.method));
  cfg.statistic = opt.method;

  const double vol = X.volume();
  const auto lx = second_order_local(X, std::vector<double>(X.size(), static_cast<double>(X.size()) / vol), cfg);

  // X and Z in one pattern so that subsets reuse network coordinates.
  std::vector<std::size_t> all_x(X.size());
  std::iota(all_x.begin(), all_x.end(), 0);
  std::vector<Event> merged_events = X.events();
  merged_events.insert(merged_events.end(), Z.events().begin(), Z.events().end());
  PatternOptions po;
  po.window = X.window();
  po.interval = X.interval();
  po.network = X.network();
  po.snap_max = std::numeric_limits<double>::infinity();
  const PointPattern merged = PointPattern::make(std::move(merged_events), {}, po);

  const std::size_t m = std::min(X.size() - 1, Z.size());
  const double lambda_star = static_cast<double>(m + 1) / vol;
  const Rng base(opt.seed);
  out.p_values.assign(X.size(), 1.0);

  parallel_for(X.size(), [&](std::size_t i) {
    Rng rng = base.substream(i);
    std::vector<std::size_t> pool(Z.size());
    std::vector<Eigen::MatrixXd> sims(opt.k);
    for (std::size_t j = 0; j < opt.k; ++j) {
      std::iota(pool.begin(), pool.end(), X.size());
      std::vector<std::size_t> idx{i};
      for (std::size_t s = 0; s < m; ++s) {
        const std::size_t pick = s + static_cast<std::size_t>(rng.below(pool.size() - s));
        std::swap(pool[s], pool[pick]);
        idx.push_back(pool[s]);
      }
      const PointPattern zs = merged.subset(idx);
      const auto l = second_order_local(zs, std::vector<double>(zs.size(), lambda_star), cfg, std::vector<std::size_t>{0});
      sims[j] = l.surfaces[0].estimate;
    }
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(sims[0].rows(), sims[0].cols());
    for (const auto& s : sims) total += s;
    const double kk = static_cast<double>(opt.k);
    const double Ti = detail::squared_distance(lx.surfaces[i].estimate, total / kk);
    std::size_t exceed = 0;
    for (std::size_t j = 0; j < opt.k; ++j) {
      const Eigen::MatrixXd others = opt.k > 1 ? Eigen::MatrixXd((total - sims[j]) / (kk - 1.0)) : sims[j];
      if (detail::squared_distance(sims[j], others) >= Ti) ++exceed;
    }
    out.p_values[i] = static_cast<double>(1 + exceed) / (kk + 1.0);
  });
  for (std::size_t i = 0; i < X.size(); ++i)
    if (out.p_values[i] <= opt.alpha) out.significant.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------

struct GlobalDiagResult {
  SummarySurface surface;   // estimate and theoretical
  Eigen::MatrixXd difference;
  double sum_squared = 0.0;
};

inline GlobalDiagResult globaldiag(const PointPattern& p, const std::vector<double>& lambda,
                                   std::optional<SummaryConfig> cfg = std::nullopt) {
  SummaryConfig c = cfg.value_or(default_summary_config(p, Statistic::K));
  GlobalDiagResult out;
  out.surface = second_order_global(p, lambda, c);
  out.difference = out.surface.estimate - out.surface.theoretical;
  out.sum_squared = out.difference.squaredNorm();
  return out;
}

// Linear interpolation between order statistics: h = (n - 1) p.
inline double quantile_linear(std::vector<double> v, double prob) {
  if (v.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw InvalidArgument("quantile probability must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double h = static_cast<double>(v.size() - 1) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

struct LocalDiagResult {
  std::vector<double> scores;  // D_i
  double p = 0.95;
  double threshold = 0.0;
  std::vector<std::size_t> flagged;  // 0-based
  ListaSet lista;
  Eigen::MatrixXd mean_surface;
};

inline LocalDiagResult localdiag(const PointPattern& pat, const std::vector<double>& lambda, double p = 0.95,
                                 std::optional<SummaryConfig> cfg = std::nullopt) {
  if (pat.size() < 3) throw InvalidArgument("localdiag needs at least 3 events");
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("localdiag percentile must lie in (0, 1)");
  SummaryConfig c = cfg.value_or(default_summary_config(pat, Statistic::K));
  LocalDiagResult out;
  out.p = p;
  out.lista = second_order_local(pat, lambda, c);
  out.mean_surface = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c.r.size()), static_cast<Eigen::Index>(c.h.size()));
  for (const auto& s : out.lista.surfaces) out.mean_surface += s.estimate;
  out.mean_surface /= static_cast<double>(pat.size());
  for (const auto& s : out.lista.surfaces) out.scores.push_back(detail::squared_distance(s.estimate, out.mean_surface));
  out.threshold = quantile_linear(out.scores, p);
  for (std::size_t i = 0; i < out.scores.size(); ++i)
    if (out.scores[i] > out.threshold) out.flagged.push_back(i);
  return out;
}

struct InfluenceSurface {
  std::size_t id;  // 0-based
  SummarySurface surface;
};

// Stored local surfaces for the flagged points, or for the requested ids.
inline std::vector<InfluenceSurface> infl(const LocalDiagResult& res,
                                          std::optional<std::vector<std::size_t>> ids = std::nullopt) {
  const auto& want = ids ? *ids : res.flagged;
  std::vector<InfluenceSurface> out;
  for (std::size_t id : want) {
    if (id >= res.lista.surfaces.size()) throw InvalidArgument("infl: id " + std::to_string(id + 1) + " out of range");
    out.push_back({id, res.lista.surfaces[id]});
  }
  return out;
}

}  // namespace stpp
