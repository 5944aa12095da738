#include <gtest/gtest.h>

#include <cmath>

#include "stpp/glm.hpp"
#include "stpp/random.hpp"

using namespace stpp;

namespace {

double poisson_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b0, double b1) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double eta = b0 * X(i, 0) + b1 * X(i, 1);
    ll += w[i] * (y[i] * eta - std::exp(eta));
  }
  return ll;
}

}  // namespace

TEST(Glm, InterceptOnlyClosedForm) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(5, 1);
  Eigen::VectorXd y(5), w(5);
  y << 0, 3, 1, 0, 7;
  w << 0.5, 1, 2, 0.25, 1.5;
  const auto f = fit_glm(X, y, w, Eigen::VectorXd(), Family::poisson_log);
  EXPECT_NEAR(f.coef[0], std::log((w.array() * y.array()).sum() / w.sum()), 1e-12);
}

TEST(Glm, MatchesGridSearchMaximiser) {
  Eigen::MatrixXd X(6, 2);
  X << 1, 0.0, 1, 0.2, 1, 0.4, 1, 0.6, 1, 0.8, 1, 1.0;
  Eigen::VectorXd y(6), w(6);
  y << 1, 2, 2, 5, 7, 12;
  w << 1, 1, 2, 1, 0.5, 1;
  const auto f = fit_glm(X, y, w, Eigen::VectorXd(), Family::poisson_log);
  // Coarse grid then successive refinement around the best cell.
  double b0 = 0, b1 = 0, step = 0.5, best = -1e300;
  double c0 = 0, c1 = 0;
  for (int level = 0; level < 12; ++level) {
    for (int i = -20; i <= 20; ++i)
      for (int j = -20; j <= 20; ++j) {
        const double a = c0 + i * step, b = c1 + j * step;
        const double ll = poisson_loglik(X, y, w, a, b);
        if (ll > best) best = ll, b0 = a, b1 = b;
      }
    c0 = b0, c1 = b1;
    step /= 10;
    if (step < 1e-8) break;
  }
  EXPECT_NEAR(f.coef[0], b0, 1e-5);
  EXPECT_NEAR(f.coef[1], b1, 1e-5);
}

TEST(Glm, ScoreAndDevianceTrace) {
  Rng rng(3);
  const int n = 300;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n), w(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1;
    X(i, 1) = rng.uniform();
    X(i, 2) = rng.normal();
    y[i] = static_cast<double>(rng.poisson(std::exp(0.5 + X(i, 1) - 0.3 * X(i, 2))));
    w[i] = 0.5 + rng.uniform();
  }
  const auto f = fit_glm(X, y, w, Eigen::VectorXd(), Family::poisson_log);
  EXPECT_TRUE(f.converged);
  EXPECT_LT(f.score_norm, 1e-6 * n);
  for (std::size_t k = 1; k < f.deviance_trace.size(); ++k)
    EXPECT_LE(f.deviance_trace[k], f.deviance_trace[k - 1] * (1 + 1e-12) + 1e-12);
}

TEST(Glm, OffsetShiftsIntercept) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 1);
  Eigen::VectorXd y(4), w = Eigen::VectorXd::Ones(4), off = Eigen::VectorXd::Constant(4, 2.0);
  y << 1, 2, 3, 4;
  const auto a = fit_glm(X, y, w, Eigen::VectorXd(), Family::poisson_log);
  const auto b = fit_glm(X, y, w, off, Family::poisson_log);
  EXPECT_NEAR(a.coef[0] - 2.0, b.coef[0], 1e-10);
}

TEST(Glm, LogisticRecovers) {
  Rng rng(4);
  const int n = 4000;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n), w = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1;
    X(i, 1) = rng.normal();
    const double p = 1 / (1 + std::exp(-(-0.5 + 1.5 * X(i, 1))));
    y[i] = rng.uniform() < p ? 1 : 0;
  }
  const auto f = fit_glm(X, y, w, Eigen::VectorXd(), Family::binomial_logit);
  EXPECT_NEAR(f.coef[0], -0.5, 4 * f.std_errors[0]);
  EXPECT_NEAR(f.coef[1], 1.5, 4 * f.std_errors[1]);
}

TEST(Glm, SeparatedLogisticIsAnError) {
  Eigen::MatrixXd X(6, 2);
  X << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
  Eigen::VectorXd y(6), w = Eigen::VectorXd::Ones(6);
  y << 0, 0, 0, 1, 1, 1;
  EXPECT_THROW(fit_glm(X, y, w, Eigen::VectorXd(), Family::binomial_logit), ConvergenceError);
}

TEST(Glm, RankDeficiencyNamesColumns) {
  Eigen::MatrixXd X(5, 3);
  X << 1, 0.1, 3, 1, 0.2, 3, 1, 0.5, 3, 1, 0.7, 3, 1, 0.9, 3;
  Eigen::VectorXd y(5), w = Eigen::VectorXd::Ones(5);
  y << 1, 0, 2, 1, 3;
  GlmOptions o;
  o.names = {"(Intercept)", "x", "cov2"};
  try {
    fit_glm(X, y, w, Eigen::VectorXd(), Family::poisson_log, o);
    FAIL();
  } catch (const RankDeficientError& e) {
    ASSERT_EQ(e.aliased().size(), 1u);
    EXPECT_TRUE(e.aliased()[0] == "cov2" || e.aliased()[0] == "(Intercept)");
  }
}

TEST(Glm, RidgeShrinks) {
  Eigen::MatrixXd X(4, 2);
  X << 1, 0, 1, 0, 1, 1, 1, 1;
  Eigen::VectorXd y(4), w = Eigen::VectorXd::Ones(4);
  y << 1, 1, 5, 5;
  const auto plain = fit_glm(X, y, w, Eigen::VectorXd(), Family::poisson_log);
  GlmOptions o;
  o.ridge = {0.0, 10.0};
  const auto shrunk = fit_glm(X, y, w, Eigen::VectorXd(), Family::poisson_log, o);
  EXPECT_LT(std::abs(shrunk.coef[1]), std::abs(plain.coef[1]));
  EXPECT_LT(shrunk.score_norm, 1e-6);
}

TEST(Glm, BadInputs) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(3, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(3), w(3);
  w << 1, 0, 1;
  EXPECT_THROW(fit_glm(X, y, w, Eigen::VectorXd(), Family::poisson_log), InvalidArgument);
  EXPECT_THROW(fit_glm(X, Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(3), Eigen::VectorXd(), Family::poisson_log),
               InvalidArgument);
}
