#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "stpp/error.hpp"
#include "stpp/random.hpp"

namespace stpp {

struct NelderMeadOptions {
  double xtol = 1e-8;     // simplex diameter, relative to max(1, |x|)
  int max_iter = 5000;
  double initial_step = 0.5;
  int restarts = 3;       // starts: the supplied point plus jittered copies
  double jitter = 0.5;
  std::uint64_t seed = 0x6e6d;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline NelderMeadResult nelder_mead_once(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& x0, const NelderMeadOptions& opt) {
  const Eigen::Index d = x0.size();
  std::vector<Eigen::VectorXd> s(static_cast<std::size_t>(d + 1), x0);
  for (Eigen::Index k = 0; k < d; ++k) s[static_cast<std::size_t>(k + 1)][k] += opt.initial_step;
  std::vector<double> fv(s.size());
  auto eval = [&](const Eigen::VectorXd& x) {
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  for (std::size_t k = 0; k < s.size(); ++k) fv[k] = eval(s[k]);
  std::vector<std::size_t> order(s.size());

  NelderMeadResult res;
  for (int it = 1; it <= opt.max_iter; ++it) {
    res.iterations = it;
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];

    double diam = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) diam = std::max(diam, (s[k] - s[best]).cwiseAbs().maxCoeff());
    // Collapsed simplex, or one sitting on a plateau.
    if (diam <= opt.xtol * std::max(1.0, s[best].cwiseAbs().maxCoeff()) ||
        fv[worst] - fv[best] <= 1e-15 * std::abs(fv[best]) + 1e-300) {
      res.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t k = 0; k < s.size(); ++k)
      if (k != worst) centroid += s[k];
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd xr = centroid + (centroid - s[worst]);
    const double fr = eval(xr);
    if (fr < fv[best]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - s[worst]);
      const double fe = eval(xe);
      if (fe < fr) {
        s[worst] = xe;
        fv[worst] = fe;
      } else {
        s[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      s[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                       : Eigen::VectorXd(centroid + 0.5 * (s[worst] - centroid));
    const double fc = eval(xc);
    if (fc <= (outside ? fr : fv[worst])) {
      s[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (k == best) continue;
      s[k] = s[best] + 0.5 * (s[k] - s[best]);
      fv[k] = eval(s[k]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  res.x = s[best];
  res.value = fv[best];
  return res;
}

}  // namespace detail

// Nelder-Mead (reflection 1, expansion 2, contraction 0.5, shrink 0.5),
// run from x0 and from jittered copies of it; each run is restarted once
// from its own optimum. The best value wins.
inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                                    const NelderMeadOptions& opt = {}) {
  Rng rng(opt.seed);
  NelderMeadResult best;
  bool any_converged = false;
  int total = 0;
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    Eigen::VectorXd start = x0;
    if (r > 0)
      for (Eigen::Index k = 0; k < start.size(); ++k) start[k] += opt.jitter * rng.normal();
    auto res = detail::nelder_mead_once(f, start, opt);
    auto again = detail::nelder_mead_once(f, res.x, opt);
    total += res.iterations + again.iterations;
    if (again.value <= res.value) {
      again.converged = again.converged || res.converged;
      res = again;
    }
    any_converged |= res.converged;
    if (res.converged && (!best.converged || res.value < best.value)) best = res;
    else if (!best.converged && res.value < best.value) best = res;
  }
  best.iterations = total;
  if (!any_converged) throw ConvergenceError("Nelder-Mead: simplex did not collapse within the iteration limit");
  return best;
}

}  // namespace stpp
