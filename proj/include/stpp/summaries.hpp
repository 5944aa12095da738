#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stpp/error.hpp"
#include "stpp/io.hpp"
#include "stpp/parallel.hpp"
#include "stpp/pattern.hpp"

namespace stpp {

enum class Statistic { K, g };
enum class EdgeCorrection { none, translation };

struct SummaryConfig {
  std::vector<double> r;  // spatial lags
  std::vector<double> h;  // temporal lags
  Statistic statistic = Statistic::K;
  EdgeCorrection correction = EdgeCorrection::translation;  // planar only
  double bandwidth_r = 0.0;  // pcf kernels; 0 selects 0.1 * max lag
  double bandwidth_h = 0.0;
  // Networks: normalise by sum(1 / lambda) instead of |L||T|.
  bool normalize = false;
};

struct SummarySurface {
  std::vector<double> r, h;
  Eigen::MatrixXd estimate;     // r x h
  Eigen::MatrixXd theoretical;  // Poisson reference
  std::size_t skipped_pairs = 0;
};

struct ListaSet {
  std::vector<std::size_t> ids;  // 0-based event indices
  std::vector<SummarySurface> surfaces;
};

inline std::vector<double> equispaced_grid(double max, std::size_t n = 10) {
  std::vector<double> g(n);
  for (std::size_t k = 0; k < n; ++k) g[k] = max * static_cast<double>(k + 1) / static_cast<double>(n);
  return g;
}

// Ten lags in (0, min side / 4] and (0, |T| / 4]; on networks the spatial
// range is 2.5 mean segment lengths capped at the network diameter.
inline SummaryConfig default_summary_config(const PointPattern& p, Statistic stat = Statistic::K) {
  SummaryConfig cfg;
  cfg.statistic = stat;
  double rmax;
  if (p.on_network()) {
    const auto& net = *p.network();
    rmax = 0.25 * (net.total_length() / static_cast<double>(net.segment_count())) * 10.0;
    const double diam = net.diameter();
    if (diam > 0.0) rmax = std::min(rmax, diam);
  } else {
    rmax = std::min(p.window().width(), p.window().height()) / 4.0;
  }
  cfg.r = equispaced_grid(rmax);
  cfg.h = equispaced_grid(p.interval().length() / 4.0);
  return cfg;
}

inline double epanechnikov(double u, double b) {
  const double z = u / b;
  return std::abs(z) <= 1.0 ? 0.75 * (1.0 - z * z) / b : 0.0;
}

namespace detail {

inline void validate_config(const SummaryConfig& cfg, const PointPattern& p) {
  auto check_grid = [](const std::vector<double>& g, const char* what) {
    if (g.empty()) throw InvalidArgument(std::string(what) + " grid is empty");
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!(g[k] > 0.0)) throw InvalidArgument(std::string(what) + " grid must be positive");
      if (k && !(g[k] > g[k - 1])) throw InvalidArgument(std::string(what) + " grid must be strictly increasing");
    }
  };
  check_grid(cfg.r, "r");
  check_grid(cfg.h, "h");
  if (cfg.bandwidth_r < 0.0 || cfg.bandwidth_h < 0.0) throw InvalidArgument("pcf bandwidths must be positive");
  if (!p.on_network()) {
    const double half = 0.5 * std::min(p.window().width(), p.window().height());
    if (cfg.r.back() > half + 1e-12) throw InvalidArgument("largest r exceeds half the shorter window side");
  }
}

inline void validate_intensity(const std::vector<double>& lambda, std::size_t n) {
  if (lambda.size() != n)
    throw InvalidArgument("intensity vector has " + std::to_string(lambda.size()) + " values for " +
                          std::to_string(n) + " events");
  for (double v : lambda)
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("intensities must be finite and positive");
}

// Shared pair machinery: per-event sums over partners j != i.
class PairEngine {
 public:
  PairEngine(const PointPattern& p, const std::vector<double>& lambda, const SummaryConfig& cfg)
      : p_(p), lambda_(lambda), cfg_(cfg) {
    br_ = cfg.bandwidth_r > 0.0 ? cfg.bandwidth_r : 0.1 * cfg.r.back();
    bh_ = cfg.bandwidth_h > 0.0 ? cfg.bandwidth_h : 0.1 * cfg.h.back();
    if (p.on_network()) {
      vertex_dist_.resize(p.size());
      parallel_for(p.size(), [&](std::size_t i) {
        vertex_dist_[i] = p.network()->distances_to_vertices(p.network_coords()[i]);
      });
    }
  }

  // Denominator playing the role of |W||T| or |L||T|.
  double volume() const {
    if (p_.on_network() && cfg_.normalize) {
      double s = 0.0;
      for (double l : lambda_) s += 1.0 / l;
      return s;
    }
    return p_.volume();
  }

  // Sum over j != i of the pair contributions at every (r, h) node, before
  // the 1 / volume (and planar pcf 1 / (4 pi r)) factors.
  Eigen::MatrixXd row_sum(std::size_t i, std::size_t& skipped) const {
    const std::size_t nr = cfg_.r.size(), nh = cfg_.h.size();
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nr + 1), static_cast<Eigen::Index>(nh + 1));
    const auto& ev = p_.events();
    const double rmax = cfg_.r.back(), hmax = cfg_.h.back();
    const bool pcf = cfg_.statistic == Statistic::g;
    const double reach_r = pcf ? rmax + br_ : rmax;
    const double reach_h = pcf ? hmax + bh_ : hmax;
    for (std::size_t j = 0; j < ev.size(); ++j) {
      if (j == i) continue;
      const double dt = std::abs(ev[i].t - ev[j].t);
      if (dt > reach_h) continue;
      double d, w;
      if (p_.on_network()) {
        d = network_distance(i, j);
        if (!(d <= reach_r)) continue;
        const int ml = p_.network()->equidistant_count(p_.network_coords()[i], vertex_dist_[i], d);
        const int mt = temporal_multiplicity(p_.interval(), ev[i].t, dt);
        if (ml == 0 || mt == 0) {
          ++skipped;
          continue;
        }
        w = static_cast<double>(ml) * static_cast<double>(mt);
      } else {
        const double dx = ev[i].x - ev[j].x, dy = ev[i].y - ev[j].y;
        d = std::hypot(dx, dy);
        if (d > reach_r) continue;
        if (cfg_.correction == EdgeCorrection::translation) {
          const auto& W = p_.window();
          const double T = p_.interval().length();
          w = (W.width() - std::abs(dx)) * (W.height() - std::abs(dy)) * (T - dt) / (W.area() * T);
          if (!(w > 0.0)) {
            ++skipped;
            continue;
          }
        } else {
          w = 1.0;
        }
      }
      const double c = 1.0 / (lambda_[i] * lambda_[j] * w);
      if (!pcf) {
        // Difference array: contribution to every node with r >= d, h >= dt.
        const auto kr = static_cast<Eigen::Index>(std::lower_bound(cfg_.r.begin(), cfg_.r.end(), d) - cfg_.r.begin());
        const auto kh = static_cast<Eigen::Index>(std::lower_bound(cfg_.h.begin(), cfg_.h.end(), dt) - cfg_.h.begin());
        acc(kr, kh) += c;
      } else {
        for (std::size_t a = 0; a < nr; ++a) {
          const double kr = epanechnikov(cfg_.r[a] - d, br_);
          if (kr == 0.0) continue;
          for (std::size_t b = 0; b < nh; ++b) {
            const double kh = epanechnikov(cfg_.h[b] - dt, bh_);
            if (kh != 0.0) acc(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += c * kr * kh;
          }
        }
      }
    }
    Eigen::MatrixXd out = acc.topLeftCorner(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nh));
    if (!pcf) {
      // Cumulative sums of non-negative terms keep the estimate monotone.
      for (Eigen::Index a = 1; a < out.rows(); ++a) out.row(a) += out.row(a - 1);
      for (Eigen::Index b = 1; b < out.cols(); ++b) out.col(b) += out.col(b - 1);
    }
    return out;
  }

  // Factor applied to every node after dividing by the volume.
  double node_scale(std::size_t a) const {
    if (cfg_.statistic == Statistic::g && !p_.on_network()) return 1.0 / (4.0 * std::numbers::pi * cfg_.r[a]);
    return 1.0;
  }

  double network_distance(std::size_t i, std::size_t j) const {
    const auto& net = *p_.network();
    const NetworkPoint a = p_.network_coords()[i], b = p_.network_coords()[j];
    const auto& seg = net.segments()[b.segment];
    double d = std::min(vertex_dist_[i][seg.from] + b.offset, vertex_dist_[i][seg.to] + net.length(b.segment) - b.offset);
    if (a.segment == b.segment) d = std::min(d, std::abs(a.offset - b.offset));
    return d;
  }

 private:
  const PointPattern& p_;
  const std::vector<double>& lambda_;
  const SummaryConfig& cfg_;
  double br_ = 0.0, bh_ = 0.0;
  std::vector<std::vector<double>> vertex_dist_;
};

inline SummarySurface empty_surface(const PointPattern& p, const SummaryConfig& cfg) {
  SummarySurface s;
  s.r = cfg.r;
  s.h = cfg.h;
  const auto nr = static_cast<Eigen::Index>(cfg.r.size()), nh = static_cast<Eigen::Index>(cfg.h.size());
  s.estimate = Eigen::MatrixXd::Zero(nr, nh);
  s.theoretical.resize(nr, nh);
  for (Eigen::Index a = 0; a < nr; ++a)
    for (Eigen::Index b = 0; b < nh; ++b) {
      const double r = cfg.r[static_cast<std::size_t>(a)], h = cfg.h[static_cast<std::size_t>(b)];
      if (cfg.statistic == Statistic::g)
        s.theoretical(a, b) = 1.0;
      else
        s.theoretical(a, b) = p.on_network() ? r * h : 2.0 * std::numbers::pi * r * r * h;
    }
  return s;
}

}  // namespace detail

// Inhomogeneous spatio-temporal K or pair correlation function. Temporal
// lags are symmetric, so the planar Poisson K is 2 pi r^2 h and the network
// K (geometric correction) is r h.
inline SummarySurface second_order_global(const PointPattern& p, const std::vector<double>& lambda,
                                          const SummaryConfig& cfg) {
  detail::validate_config(cfg, p);
  detail::validate_intensity(lambda, p.size());
  SummarySurface s = detail::empty_surface(p, cfg);
  if (p.size() < 2) return s;
  detail::PairEngine engine(p, lambda, cfg);
  std::vector<Eigen::MatrixXd> rows(p.size());
  std::vector<std::size_t> skipped(p.size(), 0);
  parallel_for(p.size(), [&](std::size_t i) { rows[i] = engine.row_sum(i, skipped[i]); });
  for (std::size_t i = 0; i < p.size(); ++i) {
    s.estimate += rows[i];
    s.skipped_pairs += skipped[i];
  }
  const double vol = engine.volume();
  for (Eigen::Index a = 0; a < s.estimate.rows(); ++a)
    s.estimate.row(a) *= engine.node_scale(static_cast<std::size_t>(a)) / vol;
  return s;
}

// Local (per-event) surfaces scaled so their mean equals the global one.
inline ListaSet second_order_local(const PointPattern& p, const std::vector<double>& lambda, const SummaryConfig& cfg,
                                   std::optional<std::vector<std::size_t>> ids = std::nullopt) {
  detail::validate_config(cfg, p);
  detail::validate_intensity(lambda, p.size());
  ListaSet out;
  if (ids) {
    for (std::size_t i : *ids)
      if (i >= p.size()) throw InvalidArgument("LISTA id " + std::to_string(i + 1) + " out of range");
    out.ids = *ids;
  } else {
    for (std::size_t i = 0; i < p.size(); ++i) out.ids.push_back(i);
  }
  out.surfaces.assign(out.ids.size(), detail::empty_surface(p, cfg));
  if (p.size() < 2) return out;
  detail::PairEngine engine(p, lambda, cfg);
  const double scale = static_cast<double>(p.size()) / engine.volume();
  parallel_for(out.ids.size(), [&](std::size_t k) {
    auto& s = out.surfaces[k];
    s.estimate = engine.row_sum(out.ids[k], s.skipped_pairs);
    for (Eigen::Index a = 0; a < s.estimate.rows(); ++a)
      s.estimate.row(a) *= engine.node_scale(static_cast<std::size_t>(a)) * scale;
  });
  return out;
}

// Long format: r,h,estimate,theoretical (optionally preceded by id, 1-based).
inline void write_surface_csv(std::ostream& out, const SummarySurface& s, std::optional<std::size_t> id = std::nullopt,
                              bool header = true) {
  if (header) out << (id ? "id," : "") << "r,h,estimate,theoretical\n";
  for (std::size_t a = 0; a < s.r.size(); ++a)
    for (std::size_t b = 0; b < s.h.size(); ++b) {
      if (id) out << *id + 1 << ',';
      out << io::format_double(s.r[a]) << ',' << io::format_double(s.h[b]) << ','
          << io::format_double(s.estimate(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))) << ','
          << io::format_double(s.theoretical(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))) << '\n';
    }
}

inline void write_lista_csv(std::ostream& out, const ListaSet& set) {
  out << "id,r,h,estimate,theoretical\n";
  for (std::size_t k = 0; k < set.ids.size(); ++k) write_surface_csv(out, set.surfaces[k], set.ids[k], false);
}

inline SummarySurface read_surface_csv(std::istream& in) {
  const auto table = io::read_csv(in);
  std::size_t off = (!table.header.empty() && table.header[0] == "id") ? 1 : 0;
  if (table.header.size() < off + 4) throw InvalidArgument("surface CSV needs r,h,estimate,theoretical");
  SummarySurface s;
  struct Row {
    double r, h, e, t;
  };
  std::vector<Row> rows;
  for (const auto& row : table.rows) {
    Row v{io::to_double(row[off], "surface"), io::to_double(row[off + 1], "surface"),
          io::to_double(row[off + 2], "surface"), io::to_double(row[off + 3], "surface")};
    rows.push_back(v);
    if (std::find(s.r.begin(), s.r.end(), v.r) == s.r.end()) s.r.push_back(v.r);
    if (std::find(s.h.begin(), s.h.end(), v.h) == s.h.end()) s.h.push_back(v.h);
  }
  if (rows.size() != s.r.size() * s.h.size()) throw InvalidArgument("surface CSV is not a full grid");
  s.estimate.resize(static_cast<Eigen::Index>(s.r.size()), static_cast<Eigen::Index>(s.h.size()));
  s.theoretical.resizeLike(s.estimate);
  for (const auto& v : rows) {
    const auto a = std::find(s.r.begin(), s.r.end(), v.r) - s.r.begin();
    const auto b = std::find(s.h.begin(), s.h.end(), v.h) - s.h.begin();
    s.estimate(a, b) = v.e;
    s.theoretical(a, b) = v.t;
  }
  return s;
}

}  // namespace stpp
