#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stpp/error.hpp"

namespace stpp {

enum class Family { poisson_log, binomial_logit };

struct GlmOptions {
  double tol = 1e-8;
  int maxit = 50;
  // Column names, used when reporting aliased columns.
  std::vector<std::string> names;
  // Optional per-column ridge penalty (0 = unpenalised).
  std::vector<double> ridge;
  std::optional<Eigen::VectorXd> start;
  double rank_tol = 1e-9;
};

struct GlmFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd std_errors;  // sqrt(diag(inverse information))
  Eigen::VectorXd eta;         // linear predictor including offset
  Eigen::VectorXd mu;
  double deviance = 0.0;
  double score_norm = 0.0;  // max |X^T w (y - mu)|
  int iterations = 0;
  bool converged = false;
  std::vector<double> deviance_trace;
};

namespace detail {

inline double glm_mean(Family f, double eta) {
  if (f == Family::poisson_log) return std::exp(eta);
  return 1.0 / (1.0 + std::exp(-eta));
}

inline double glm_variance(Family f, double mu) { return f == Family::poisson_log ? mu : mu * (1.0 - mu); }

inline double glm_deviance(Family f, const Eigen::VectorXd& y, const Eigen::VectorXd& w, const Eigen::VectorXd& mu) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double yi = y[i], m = mu[i];
    if (f == Family::poisson_log) {
      dev += 2.0 * w[i] * ((yi > 0.0 ? yi * std::log(yi / m) : 0.0) - (yi - m));
    } else {
      double term = 0.0;
      if (yi > 0.0) term += yi * std::log(yi / m);
      if (yi < 1.0) term += (1.0 - yi) * std::log((1.0 - yi) / (1.0 - m));
      dev += 2.0 * w[i] * term;
    }
  }
  return dev;
}

}  // namespace detail

// Iteratively reweighted least squares for a canonical-link GLM with prior
// weights and offset. Each step solves the weighted least-squares problem by
// a column-pivoted Householder QR; the design must have full column rank.
inline GlmFit fit_glm(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                      const Eigen::VectorXd& offset, Family family, const GlmOptions& opt = {}) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (y.size() != n || w.size() != n || (offset.size() != 0 && offset.size() != n))
    throw InvalidArgument("fit_glm: dimension mismatch");
  if (p == 0) throw InvalidArgument("fit_glm: design has no columns");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(w[i] > 0.0) || !std::isfinite(w[i])) throw InvalidArgument("fit_glm: weights must be positive");
  const Eigen::VectorXd off = offset.size() ? offset : Eigen::VectorXd::Zero(n);

  Eigen::VectorXd ridge = Eigen::VectorXd::Zero(p);
  for (std::size_t j = 0; j < opt.ridge.size() && static_cast<Eigen::Index>(j) < p; ++j) ridge[static_cast<Eigen::Index>(j)] = opt.ridge[j];
  const Eigen::Index extra = (ridge.array() > 0.0).count();

  // Rank check on the column-normalised design (plus any ridge rows).
  {
    Eigen::MatrixXd Z(n + extra, p);
    Z.topRows(n) = X;
    Z.bottomRows(extra).setZero();
    for (Eigen::Index j = 0, k = 0; j < p; ++j)
      if (ridge[j] > 0.0) Z(n + k++, j) = std::sqrt(ridge[j]);
    for (Eigen::Index j = 0; j < p; ++j) {
      const double norm = Z.col(j).norm();
      if (norm > 0.0) Z.col(j) /= norm;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
    qr.setThreshold(opt.rank_tol);
    if (qr.rank() < p) {
      std::vector<std::string> aliased;
      const auto perm = qr.colsPermutation().indices();
      for (Eigen::Index k = qr.rank(); k < p; ++k) {
        const auto j = static_cast<std::size_t>(perm[k]);
        aliased.push_back(j < opt.names.size() ? opt.names[j] : "column " + std::to_string(j));
      }
      throw RankDeficientError(std::move(aliased));
    }
  }

  GlmFit fit;
  Eigen::VectorXd eta(n), mu(n);
  if (opt.start) {
    eta = X * *opt.start + off;
    for (Eigen::Index i = 0; i < n; ++i) mu[i] = detail::glm_mean(family, eta[i]);
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = family == Family::poisson_log ? y[i] + 0.1 : (w[i] * y[i] + 0.5) / (w[i] + 1.0);
      eta[i] = family == Family::poisson_log ? std::log(mu[i]) : std::log(mu[i] / (1.0 - mu[i]));
    }
  }

  auto penalty = [&](const Eigen::VectorXd& b) { return (ridge.array() * b.array().square()).sum(); };
  auto solve_step = [&](const Eigen::VectorXd& eta_cur, const Eigen::VectorXd& mu_cur,
                        Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) -> Eigen::VectorXd {
    Eigen::MatrixXd A(n + extra, p);
    Eigen::VectorXd rhs(n + extra);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double var = std::max(detail::glm_variance(family, mu_cur[i]), 1e-300);
      const double sw = std::sqrt(w[i] * var);
      const double z = eta_cur[i] - off[i] + (y[i] - mu_cur[i]) / var;
      A.row(i) = sw * X.row(i);
      rhs[i] = sw * z;
    }
    for (Eigen::Index j = 0, k = 0; j < p; ++j)
      if (ridge[j] > 0.0) {
        A.row(n + k).setZero();
        A(n + k, j) = std::sqrt(ridge[j]);
        rhs[n + k] = 0.0;
        ++k;
      }
    qr.compute(A);
    return qr.solve(rhs);
  };

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
  Eigen::VectorXd beta = opt.start ? *opt.start : Eigen::VectorXd::Zero(p);
  double dev_old = std::numeric_limits<double>::infinity();
  if (opt.start) dev_old = detail::glm_deviance(family, y, w, mu) + penalty(beta);
  bool polished = false;

  for (int it = 1; it <= opt.maxit; ++it) {
    fit.iterations = it;
    Eigen::VectorXd beta_new = solve_step(eta, mu, qr);
    Eigen::VectorXd eta_new, mu_new(n);
    double dev = std::numeric_limits<double>::infinity();
    for (int halving = 0;; ++halving) {
      eta_new = X * beta_new + off;
      bool finite = beta_new.allFinite();
      for (Eigen::Index i = 0; i < n && finite; ++i) {
        mu_new[i] = detail::glm_mean(family, eta_new[i]);
        finite = std::isfinite(mu_new[i]) && std::isfinite(eta_new[i]);
      }
      if (finite) dev = detail::glm_deviance(family, y, w, mu_new) + penalty(beta_new);
      if (std::isfinite(dev) && (!std::isfinite(dev_old) || dev <= dev_old * (1.0 + 1e-12) + 1e-12)) break;
      if (halving >= 30 || !std::isfinite(dev_old))
        throw ConvergenceError("fit_glm: divergence, step halving exhausted at iteration " + std::to_string(it));
      beta_new = 0.5 * (beta + beta_new);
    }
    const double change = std::abs(dev - dev_old) / (std::abs(dev) + 0.1);
    beta = beta_new;
    eta = eta_new;
    mu = mu_new;
    fit.deviance_trace.push_back(dev);
    const bool small = std::isfinite(dev_old) && change < opt.tol;
    dev_old = dev;
    if (small) {
      if (polished) {
        fit.converged = true;
        break;
      }
      polished = true;  // one more Newton step tightens the score equations
    }
  }
  if (!fit.converged) throw ConvergenceError("fit_glm: no convergence within " + std::to_string(opt.maxit) + " iterations");

  fit.coef = beta;
  fit.eta = eta;
  fit.mu = mu;
  fit.deviance = detail::glm_deviance(family, y, w, mu);
  Eigen::VectorXd resid = (w.array() * (y - mu).array()).matrix();
  Eigen::VectorXd score = X.transpose() * resid - (ridge.array() * beta.array()).matrix();
  fit.score_norm = score.cwiseAbs().maxCoeff();

  if (family == Family::binomial_logit) {
    if (fit.deviance < 1e-8 * w.sum() || eta.cwiseAbs().maxCoeff() > 30.0)
      throw ConvergenceError("fit_glm: fitted probabilities numerically 0 or 1; the data are separated");
  }

  // Inverse information from the weighted design at the solution.
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wv = w[i] * detail::glm_variance(family, mu[i]);
    info.noalias() += wv * X.row(i).transpose() * X.row(i);
  }
  info.diagonal() += ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  fit.std_errors = inv.diagonal().cwiseMax(0.0).cwiseSqrt();
  return fit;
}

}  // namespace stpp
