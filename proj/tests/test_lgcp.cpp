#include <gtest/gtest.h>

#include <cmath>

#include "stpp/lgcp.hpp"

using namespace stpp;

namespace {

CovarianceModel model(CovarianceFamily f, double s, double a, double b) {
  CovarianceModel m;
  m.family = f;
  m.sigma = s;
  m.alpha = a;
  m.beta = b;
  return m;
}

std::vector<double> grid(double max, int n) {
  std::vector<double> g;
  for (int k = 1; k <= n; ++k) g.push_back(max * k / n);
  return g;
}

Eigen::MatrixXd pcf_surface(const CovarianceModel& m, const std::vector<double>& r, const std::vector<double>& h) {
  Eigen::MatrixXd g(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(h.size()));
  for (std::size_t a = 0; a < r.size(); ++a)
    for (std::size_t b = 0; b < h.size(); ++b)
      g(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = lgcp_pcf(m, r[a], h[b]);
  return g;
}

}  // namespace

TEST(Covariance, ValuesAtOrigin) {
  for (auto f : {CovarianceFamily::separable_exponential, CovarianceFamily::gneiting, CovarianceFamily::iaco_cesare})
    EXPECT_DOUBLE_EQ(cov_eval(model(f, 1.5, 0.2, 0.3), 0, 0), 2.25);
}

TEST(Covariance, ClosedForms) {
  EXPECT_NEAR(cov_eval(model(CovarianceFamily::separable_exponential, 2, 0.5, 0.25), 0.5, 0.25), 4 * std::exp(-2.0),
              1e-14);
  EXPECT_NEAR(cov_eval(model(CovarianceFamily::gneiting, 1, 1, 1), 1, 1), 0.5 * std::exp(-1 / std::sqrt(2.0)), 1e-14);
  EXPECT_NEAR(cov_eval(model(CovarianceFamily::iaco_cesare, 1, 1, 1), 1, 1), std::pow(3.0, -1.5), 1e-14);
}

TEST(Covariance, SeparableFactorises) {
  const auto m = model(CovarianceFamily::separable_exponential, 1.3, 0.2, 0.4);
  for (double r : {0.0, 0.1, 0.5})
    for (double h : {0.0, 0.2, 0.9})
      EXPECT_NEAR(cov_eval(m, r, h) * cov_eval(m, 0, 0), cov_eval(m, r, 0) * cov_eval(m, 0, h), 1e-14);
}

TEST(Covariance, PcfAtLeastOneAndDecreasing) {
  for (auto f : {CovarianceFamily::separable_exponential, CovarianceFamily::gneiting, CovarianceFamily::iaco_cesare}) {
    const auto m = model(f, 0.8, 0.1, 0.2);
    double prev = 1e300;
    for (double r = 0; r < 1; r += 0.05) {
      const double g = lgcp_pcf(m, r, 0.1);
      EXPECT_GE(g, 1.0);
      EXPECT_LE(g, prev);
      prev = g;
    }
  }
  EXPECT_THROW(cov_eval(model(CovarianceFamily::gneiting, 1, 1, 1), -0.1, 0), InvalidArgument);
  EXPECT_EQ(parse_covariance_family("cesare"), CovarianceFamily::iaco_cesare);
  EXPECT_THROW(parse_covariance_family("matern"), InvalidArgument);
}

TEST(MinContrast, NoiselessRecovery) {
  const auto r = grid(0.25, 10), h = grid(0.25, 10);
  for (auto f : {CovarianceFamily::separable_exponential, CovarianceFamily::gneiting, CovarianceFamily::iaco_cesare}) {
    const auto truth = model(f, 1.2, 0.08, 0.12);
    const auto res = min_contrast(r, h, pcf_surface(truth, r, h), model(f, 1, 1, 1));
    EXPECT_NEAR(res.model.sigma, 1.2, 1e-3 * 1.2) << to_string(f);
    EXPECT_NEAR(res.model.alpha, 0.08, 1e-3 * 0.08) << to_string(f);
    EXPECT_NEAR(res.model.beta, 0.12, 1e-3 * 0.12) << to_string(f);
    EXPECT_FALSE(res.boundary);
  }
}

TEST(MinContrast, FlatSurfaceFlagsBoundary) {
  const auto r = grid(0.25, 10), h = grid(0.25, 10);
  const auto res = min_contrast(r, h, Eigen::MatrixXd::Ones(10, 10), CovarianceModel{});
  EXPECT_TRUE(res.boundary);
  EXPECT_LT(res.contrast, 1e-6);
}

TEST(MinContrast, WeightScaleInvariant) {
  const auto r = grid(0.25, 8), h = grid(0.25, 8);
  const auto truth = model(CovarianceFamily::gneiting, 0.9, 0.05, 0.1);
  Eigen::MatrixXd g = pcf_surface(truth, r, h);
  g(3, 3) *= 1.05;  // keep it off the exact optimum
  MinContrastOptions a, b;
  a.weights = Eigen::MatrixXd::Ones(8, 8);
  b.weights = Eigen::MatrixXd::Constant(8, 8, 7.0);
  const auto ra = min_contrast(r, h, g, model(CovarianceFamily::gneiting, 1, 1, 1), a);
  const auto rb = min_contrast(r, h, g, model(CovarianceFamily::gneiting, 1, 1, 1), b);
  EXPECT_NEAR(ra.model.sigma, rb.model.sigma, 1e-5);
  EXPECT_NEAR(ra.model.alpha, rb.model.alpha, 1e-5 * ra.model.alpha);
  EXPECT_NEAR(rb.contrast, 7 * ra.contrast, 1e-8 + 1e-6 * rb.contrast);
}

TEST(MinContrast, RejectsBadSurface) {
  const auto r = grid(0.25, 3), h = grid(0.25, 3);
  EXPECT_THROW(min_contrast(r, h, Eigen::MatrixXd::Ones(2, 3), CovarianceModel{}), InvalidArgument);
  EXPECT_THROW(min_contrast(r, h, Eigen::MatrixXd::Constant(3, 3, -1), CovarianceModel{}), InvalidArgument);
}

TEST(SimLgcp, MeanCountAndOverdispersion) {
  const auto m = model(CovarianceFamily::separable_exponential, 1.0, 0.15, 0.2);
  LgcpSimOptions o;
  o.grid = {8, 8, 6};
  const int reps = 60;
  double sum = 0, sum2 = 0;
  for (int k = 0; k < reps; ++k) {
    const double n = static_cast<double>(sim_lgcp(m, 200, 40 + k, o).size());
    sum += n, sum2 += n * n;
  }
  const double mean = sum / reps, var = (sum2 - reps * mean * mean) / (reps - 1);
  EXPECT_NEAR(mean, 200, 4 * std::sqrt(var / reps));
  EXPECT_GT(var, 2 * mean);
}

TEST(SimLgcp, FieldMeanAndDeterminism) {
  const auto m = model(CovarianceFamily::iaco_cesare, 0.7, 0.1, 0.1);
  LgcpSimInfo a, b;
  const auto pa = sim_lgcp(m, 100, 5, {}, &a), pb = sim_lgcp(m, 100, 5, {}, &b);
  EXPECT_EQ(pa.events(), pb.events());
  EXPECT_EQ(a.field.size(), 12 * 12 * 8);
  for (std::size_t i = 1; i < pa.size(); ++i) EXPECT_LE(pa[i - 1].t, pa[i].t);
  LgcpSimOptions big;
  big.grid = {20, 20, 20};
  EXPECT_THROW(sim_lgcp(m, 100, 1, big), InvalidArgument);
}

TEST(Stlgcppm, GlobalRunsAndReportsPcf) {
  const auto p = sim_lgcp(model(CovarianceFamily::separable_exponential, 1.0, 0.1, 0.15), 300, 9);
  const auto f = stlgcppm(p, "~1");
  EXPECT_EQ(f.names, std::vector<std::string>{"(Intercept)"});
  EXPECT_GT(f.params[0], 0);
  EXPECT_EQ(f.pcf.estimate.rows(), 10);
  EXPECT_GE(f.elapsed_seconds, 0.0);
}

TEST(Stlgcppm, LocalFirstOrderMatchesLocstppm) {
  const auto p = sim_lgcp(model(CovarianceFamily::separable_exponential, 0.5, 0.1, 0.15), 200, 10);
  LgcpOptions o;
  o.first = Order::local;
  o.h_space = 0.3;
  o.h_time = 0.3;
  const auto f = stlgcppm(p, "~ x", o);
  LocalFitOptions lo;
  lo.h_space = 0.3;
  lo.h_time = 0.3;
  const auto l = locstppm(p, "~ x", lo);
  ASSERT_EQ(f.coef_local.rows(), l.coef.rows());
  for (Eigen::Index i = 0; i < l.coef.rows(); ++i)
    for (Eigen::Index j = 0; j < l.coef.cols(); ++j)
      if (std::isfinite(l.coef(i, j))) EXPECT_EQ(f.coef_local(i, j), l.coef(i, j));
}

TEST(Stlgcppm, LocalSecondOrder) {
  const auto p = sim_lgcp(model(CovarianceFamily::separable_exponential, 0.8, 0.1, 0.15), 150, 11);
  LgcpOptions o;
  o.second = Order::local;
  const auto f = stlgcppm(p, "~1", o);
  ASSERT_EQ(static_cast<std::size_t>(f.params_local.rows()), p.size());
  std::size_t ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (f.local_ok[i]) {
      ++ok;
      EXPECT_GT(f.params_local(static_cast<Eigen::Index>(i), 0), 0.0);
    }
  EXPECT_GT(ok, p.size() / 2);
}

TEST(Stlgcppm, TooFewEvents) {
  PatternOptions o;
  o.window = SpatialWindow{0, 1, 0, 1};
  o.interval = TimeInterval{0, 1};
  const auto p = PointPattern::make({{0.1, 0.1, 0.1}, {0.5, 0.5, 0.5}}, {}, o);
  EXPECT_THROW(stlgcppm(p, "~1"), InvalidArgument);
}
