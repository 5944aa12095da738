#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "stpp/error.hpp"
#include "stpp/io.hpp"
#include "stpp/parallel.hpp"
#include "stpp/pattern.hpp"

namespace stpp {

// Regular lattice of covariate values over window x interval. Nodes sit on
// the domain boundaries: node i along x is at origin[0] + i * step[0].
struct CovariateGrid {
  std::string name;
  std::array<std::size_t, 3> dims{};  // nx, ny, nt
  std::array<double, 3> origin{};
  std::array<double, 3> step{};
  std::vector<double> values;  // x fastest, then y, then t

  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return i + dims[0] * (j + dims[1] * k);
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return values[index(i, j, k)]; }
  std::array<double, 3> node(std::size_t i, std::size_t j, std::size_t k) const {
    return {origin[0] + static_cast<double>(i) * step[0], origin[1] + static_cast<double>(j) * step[1],
            origin[2] + static_cast<double>(k) * step[2]};
  }

  // Nearest node in grid-index units; exact halves go to the lower index and
  // points outside the grid clamp to the boundary.
  std::array<std::size_t, 3> nearest_node(double x, double y, double t) const {
    const double q[3] = {x, y, t};
    std::array<std::size_t, 3> idx{};
    for (int a = 0; a < 3; ++a) {
      const double u = (q[a] - origin[a]) / step[a];
      double r = std::ceil(u - 0.5);
      r = std::clamp(r, 0.0, static_cast<double>(dims[a] - 1));
      idx[a] = static_cast<std::size_t>(r);
    }
    return idx;
  }

  double lookup_nearest(double x, double y, double t) const {
    const auto [i, j, k] = nearest_node(x, y, t);
    return at(i, j, k);
  }

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] < 1) throw InvalidArgument("covariate grid '" + name + "' has an empty axis");
      if (!(step[a] > 0.0)) throw InvalidArgument("covariate grid '" + name + "' has a non-positive step");
    }
    if (values.size() != size()) throw InvalidArgument("covariate grid '" + name + "' value count mismatch");
    for (double v : values)
      if (!std::isfinite(v)) throw InvalidArgument("covariate grid '" + name + "' has non-finite values");
  }
};

struct CovariateSample {
  double x = 0.0, y = 0.0, t = 0.0, value = 0.0;
};

struct IdwOptions {
  double power = 2.0;
  double mult = 20.0;
  // Explicit (nx, ny, nt); overrides mult.
  std::optional<std::array<std::size_t, 3>> dims;
  std::optional<SpatialWindow> window;
  std::optional<TimeInterval> interval;
  std::string name = "cov";
};

struct IdwReport {
  std::size_t duplicate_sites = 0;
  std::size_t conflicting_sites = 0;
};

namespace detail {

// Samples sorted into a canonical order with duplicate sites averaged.
inline std::vector<CovariateSample> canonical_samples(std::vector<CovariateSample> s, IdwReport& report) {
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) {
    return std::tie(a.x, a.y, a.t, a.value) < std::tie(b.x, b.y, b.t, b.value);
  });
  std::vector<CovariateSample> out;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    double sum = 0.0;
    bool conflict = false;
    while (j < s.size() && s[j].x == s[i].x && s[j].y == s[i].y && s[j].t == s[i].t) {
      sum += s[j].value;
      conflict |= s[j].value != s[i].value;
      ++j;
    }
    if (j - i > 1) {
      ++report.duplicate_sites;
      if (conflict) ++report.conflicting_sites;
    }
    out.push_back({s[i].x, s[i].y, s[i].t, sum / static_cast<double>(j - i)});
    i = j;
  }
  return out;
}

}  // namespace detail

// Shepard inverse-distance weighting. `samples` must be canonical.
inline double idw_value(const std::vector<CovariateSample>& samples, double x, double y, double t, double power) {
  // Weighted mean of differences from the first value; a constant field
  // then comes back exactly.
  const double anchor = samples.front().value;
  double num = 0.0, den = 0.0, lo = anchor, hi = anchor;
  for (const auto& s : samples) {
    const double d2 = (x - s.x) * (x - s.x) + (y - s.y) * (y - s.y) + (t - s.t) * (t - s.t);
    if (std::sqrt(d2) < 1e-12) return s.value;
    const double w = std::pow(d2, -0.5 * power);
    num += w * (s.value - anchor);
    den += w;
    lo = std::min(lo, s.value), hi = std::max(hi, s.value);
  }
  return std::clamp(anchor + num / den, lo, hi);
}

inline CovariateGrid interpolate_idw(std::vector<CovariateSample> samples, const IdwOptions& opts = {},
                                     IdwReport* report = nullptr) {
  if (samples.empty()) throw InvalidArgument("interpolate_idw: no samples");
  if (!(opts.power > 0.0)) throw InvalidArgument("interpolate_idw: power must be positive");
  for (const auto& s : samples)
    if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.t) || !std::isfinite(s.value))
      throw InvalidArgument("interpolate_idw: non-finite sample");

  IdwReport local;
  const std::size_t raw_count = samples.size();
  auto canon = detail::canonical_samples(std::move(samples), local);
  if (report) *report = local;

  SpatialWindow w;
  TimeInterval iv;
  if (opts.window) {
    w = *opts.window;
  } else {
    w = {canon[0].x, canon[0].x, canon[0].y, canon[0].y};
    for (const auto& s : canon) {
      w.x0 = std::min(w.x0, s.x), w.x1 = std::max(w.x1, s.x);
      w.y0 = std::min(w.y0, s.y), w.y1 = std::max(w.y1, s.y);
    }
  }
  if (opts.interval) {
    iv = *opts.interval;
  } else {
    iv = {canon[0].t, canon[0].t};
    for (const auto& s : canon) iv.t0 = std::min(iv.t0, s.t), iv.t1 = std::max(iv.t1, s.t);
  }
  w.validate();
  iv.validate();

  CovariateGrid g;
  g.name = opts.name;
  if (opts.dims) {
    g.dims = *opts.dims;
  } else {
    const auto n = static_cast<std::size_t>(std::ceil(opts.mult * std::cbrt(static_cast<double>(raw_count))));
    g.dims = {n, n, n};
  }
  for (auto& d : g.dims) d = std::max<std::size_t>(d, 2);
  g.origin = {w.x0, w.y0, iv.t0};
  g.step = {w.width() / static_cast<double>(g.dims[0] - 1), w.height() / static_cast<double>(g.dims[1] - 1),
            iv.length() / static_cast<double>(g.dims[2] - 1)};
  g.values.assign(g.size(), 0.0);

  const double power = opts.power;
  parallel_for(g.dims[2], [&](std::size_t k) {
    for (std::size_t j = 0; j < g.dims[1]; ++j)
      for (std::size_t i = 0; i < g.dims[0]; ++i) {
        const auto p = g.node(i, j, k);
        g.values[g.index(i, j, k)] = idw_value(canon, p[0], p[1], p[2], power);
      }
  });
  return g;
}

inline std::vector<CovariateSample> read_samples_csv(const std::string& path) {
  auto in = io::open_in(path);
  const auto table = io::read_csv(in);
  if (table.header.size() < 4) throw InvalidArgument("covariate sample CSV needs columns x,y,t,value");
  std::vector<CovariateSample> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string ctx = path + " row " + std::to_string(r + 1);
    out.push_back({io::to_double(row[0], ctx), io::to_double(row[1], ctx), io::to_double(row[2], ctx),
                   io::to_double(row[3], ctx)});
  }
  return out;
}

// Interchange format: header x,y,t,value, one node per row, x fastest.
inline void write_grid_csv(std::ostream& out, const CovariateGrid& g) {
  out << "x,y,t,value\n";
  for (std::size_t k = 0; k < g.dims[2]; ++k)
    for (std::size_t j = 0; j < g.dims[1]; ++j)
      for (std::size_t i = 0; i < g.dims[0]; ++i) {
        const auto p = g.node(i, j, k);
        out << io::format_double(p[0]) << ',' << io::format_double(p[1]) << ',' << io::format_double(p[2]) << ','
            << io::format_double(g.at(i, j, k)) << '\n';
      }
}

inline CovariateGrid read_grid_csv(std::istream& in, std::string name) {
  const auto table = io::read_csv(in);
  if (table.header.size() < 4) throw InvalidArgument("covariate grid CSV needs columns x,y,t,value");
  std::array<std::vector<double>, 3> axes;
  std::vector<std::array<double, 4>> rows;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    std::array<double, 4> v{};
    for (int c = 0; c < 4; ++c) v[c] = io::to_double(table.rows[r][c], "grid row " + std::to_string(r + 1));
    rows.push_back(v);
    for (int a = 0; a < 3; ++a) axes[a].push_back(v[a]);
  }
  if (rows.empty()) throw InvalidArgument("covariate grid CSV has no rows");
  CovariateGrid g;
  g.name = std::move(name);
  for (int a = 0; a < 3; ++a) {
    auto& ax = axes[a];
    std::sort(ax.begin(), ax.end());
    ax.erase(std::unique(ax.begin(), ax.end()), ax.end());
    g.dims[a] = ax.size();
    g.origin[a] = ax.front();
    g.step[a] = ax.size() > 1 ? (ax.back() - ax.front()) / static_cast<double>(ax.size() - 1) : 1.0;
  }
  if (rows.size() != g.size()) throw InvalidArgument("covariate grid CSV is not a complete lattice");
  g.values.assign(g.size(), 0.0);
  for (const auto& v : rows) {
    std::size_t idx[3];
    for (int a = 0; a < 3; ++a)
      idx[a] = static_cast<std::size_t>(std::lower_bound(axes[a].begin(), axes[a].end(), v[a]) - axes[a].begin());
    g.values[g.index(idx[0], idx[1], idx[2])] = v[3];
  }
  g.validate();
  return g;
}

inline CovariateGrid read_grid_csv(const std::string& path, std::string name) {
  auto in = io::open_in(path);
  return read_grid_csv(in, std::move(name));
}

}  // namespace stpp
