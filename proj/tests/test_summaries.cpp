#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "stpp/simulate.hpp"
#include "stpp/summaries.hpp"

using namespace stpp;

namespace {

PointPattern unit_pattern(std::vector<Event> ev) {
  PatternOptions o;
  o.window = SpatialWindow{0, 1, 0, 1};
  o.interval = TimeInterval{0, 1};
  return PointPattern::make(std::move(ev), {}, o);
}

std::shared_ptr<const LinearNetwork> square_net() {
  return std::make_shared<const LinearNetwork>(
      LinearNetwork({{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}},
                    {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 4}, {4, 2}, {1, 4}}));
}

SummaryConfig small_cfg(Statistic s = Statistic::K) {
  SummaryConfig c;
  c.r = {0.05, 0.1, 0.2, 0.3};
  c.h = {0.05, 0.1, 0.25};
  c.statistic = s;
  return c;
}

}  // namespace

TEST(Summaries, SinglePointGivesZeros) {
  const auto p = unit_pattern({{0.5, 0.5, 0.5}});
  const auto s = second_order_global(p, {1.0}, small_cfg());
  EXPECT_TRUE((s.estimate.array() == 0.0).all());
  EXPECT_NEAR(s.theoretical(1, 1), 2 * std::numbers::pi * 0.01 * 0.1, 1e-15);
}

TEST(Summaries, ThreePointBruteForce) {
  const std::vector<Event> ev{{0.2, 0.3, 0.1}, {0.25, 0.4, 0.15}, {0.6, 0.5, 0.2}};
  const auto p = unit_pattern(ev);
  const std::vector<double> lam{3.0, 5.0, 2.0};
  const auto cfg = small_cfg();
  const auto s = second_order_global(p, lam, cfg);
  for (std::size_t a = 0; a < cfg.r.size(); ++a)
    for (std::size_t b = 0; b < cfg.h.size(); ++b) {
      double k = 0.0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          if (i == j) continue;
          const double dx = ev[i].x - ev[j].x, dy = ev[i].y - ev[j].y, dt = std::abs(ev[i].t - ev[j].t);
          if (std::sqrt(dx * dx + dy * dy) > cfg.r[a] || dt > cfg.h[b]) continue;
          const double w = (1 - std::abs(dx)) * (1 - std::abs(dy)) * (1 - dt);
          k += 1.0 / (lam[i] * lam[j] * w);
        }
      EXPECT_NEAR(s.estimate(a, b), k, 1e-12 * (1 + k));
    }
}

TEST(Summaries, KMonotoneInBothLags) {
  const auto p = sim_poisson(IntensitySpec::constant(150), Domain::planar({0, 1, 0, 1}, {0, 1}), 21);
  const auto s = second_order_global(p, std::vector<double>(p.size(), 150.0), default_summary_config(p));
  for (Eigen::Index a = 0; a < s.estimate.rows(); ++a)
    for (Eigen::Index b = 0; b < s.estimate.cols(); ++b) {
      if (a) EXPECT_GE(s.estimate(a, b), s.estimate(a - 1, b));
      if (b) EXPECT_GE(s.estimate(a, b), s.estimate(a, b - 1));
    }
}

TEST(Summaries, ScaleEquivariance) {
  // Scaling space by c and time by d, with lambda rescaled to match, maps
  // K(r, h) to c^2 d K(r / c, h / d).
  const double c = 3.0, d = 2.0;
  const auto p = sim_poisson(IntensitySpec::constant(100), Domain::planar({0, 1, 0, 1}, {0, 1}), 22);
  std::vector<Event> ev;
  for (const auto& e : p.events()) ev.push_back({c * e.x, c * e.y, d * e.t});
  PatternOptions o;
  o.window = SpatialWindow{0, c, 0, c};
  o.interval = TimeInterval{0, d};
  const auto q = PointPattern::make(ev, {}, o);
  auto cfg = small_cfg();
  auto cfg2 = cfg;
  for (auto& r : cfg2.r) r *= c;
  for (auto& h : cfg2.h) h *= d;
  const auto a = second_order_global(p, std::vector<double>(p.size(), 100.0), cfg);
  const auto b = second_order_global(q, std::vector<double>(q.size(), 100.0 / (c * c * d)), cfg2);
  for (Eigen::Index i = 0; i < a.estimate.rows(); ++i)
    for (Eigen::Index j = 0; j < a.estimate.cols(); ++j)
      EXPECT_NEAR(b.estimate(i, j), c * c * d * a.estimate(i, j), 1e-9 * (1 + b.estimate(i, j)));
}

TEST(Summaries, ListaMeanIsGlobal) {
  const auto p = sim_poisson(IntensitySpec::function([](double x, double, double) { return 80 * std::exp(x); }),
                             Domain::planar({0, 1, 0, 1}, {0, 1}), 23);
  std::vector<double> lam;
  for (const auto& e : p.events()) lam.push_back(80 * std::exp(e.x));
  for (auto stat : {Statistic::K, Statistic::g}) {
    const auto cfg = small_cfg(stat);
    const auto g = second_order_global(p, lam, cfg);
    const auto l = second_order_local(p, lam, cfg);
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(g.estimate.rows(), g.estimate.cols());
    for (const auto& s : l.surfaces) mean += s.estimate;
    mean /= static_cast<double>(l.surfaces.size());
    EXPECT_LT((mean - g.estimate).cwiseAbs().maxCoeff(), 1e-10 * (1 + g.estimate.cwiseAbs().maxCoeff()));
  }
}

TEST(Summaries, TwoPointsSymmetric) {
  const auto p = unit_pattern({{0.3, 0.3, 0.4}, {0.35, 0.32, 0.45}});
  const auto l = second_order_local(p, {7.0, 7.0}, small_cfg());
  EXPECT_EQ(l.surfaces[0].estimate, l.surfaces[1].estimate);
}

TEST(Summaries, NetworkLocalSubsetIds) {
  auto net = square_net();
  const auto p = sim_poisson(IntensitySpec::constant(20), Domain::on_network(net, {0, 1}), 24);
  ASSERT_GE(p.size(), 4u);
  std::vector<double> lam(p.size(), 20.0);
  const auto cfg = default_summary_config(p);
  const auto all = second_order_local(p, lam, cfg);
  const auto sub = second_order_local(p, lam, cfg, std::vector<std::size_t>{0, 1, 2});
  ASSERT_EQ(sub.surfaces.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(sub.surfaces[k].estimate, all.surfaces[k].estimate);
  EXPECT_THROW(second_order_local(p, lam, cfg, std::vector<std::size_t>{p.size()}), InvalidArgument);
}

TEST(Summaries, NetworkListaMeanAndNormalize) {
  auto net = square_net();
  const auto p = sim_poisson(IntensitySpec::constant(30), Domain::on_network(net, {0, 1}), 25);
  std::vector<double> lam(p.size(), 30.0);
  for (bool norm : {false, true}) {
    auto cfg = default_summary_config(p);
    cfg.normalize = norm;
    const auto g = second_order_global(p, lam, cfg);
    const auto l = second_order_local(p, lam, cfg);
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(g.estimate.rows(), g.estimate.cols());
    for (const auto& s : l.surfaces) mean += s.estimate;
    mean /= static_cast<double>(l.surfaces.size());
    EXPECT_LT((mean - g.estimate).cwiseAbs().maxCoeff(), 1e-10 * (1 + g.estimate.cwiseAbs().maxCoeff()));
  }
}

TEST(Summaries, ConfigErrors) {
  const auto p = unit_pattern({{0.5, 0.5, 0.5}, {0.6, 0.5, 0.4}});
  auto cfg = small_cfg();
  cfg.r = {0.2, 0.1};
  EXPECT_THROW(second_order_global(p, {1, 1}, cfg), InvalidArgument);
  cfg = small_cfg();
  cfg.r = {0.7};
  EXPECT_THROW(second_order_global(p, {1, 1}, cfg), InvalidArgument);
  EXPECT_THROW(second_order_global(p, {1, 0}, small_cfg()), InvalidArgument);
  EXPECT_THROW(second_order_global(p, {1}, small_cfg()), InvalidArgument);
}

TEST(Summaries, CsvRoundTrip) {
  const auto p = sim_poisson(IntensitySpec::constant(60), Domain::planar({0, 1, 0, 1}, {0, 1}), 26);
  const auto s = second_order_global(p, std::vector<double>(p.size(), 60.0), small_cfg());
  std::stringstream ss;
  write_surface_csv(ss, s);
  const auto t = read_surface_csv(ss);
  EXPECT_EQ(t.r, s.r);
  EXPECT_EQ(t.h, s.h);
  EXPECT_EQ(t.estimate, s.estimate);
  EXPECT_EQ(t.theoretical, s.theoretical);
}

TEST(Summaries, PoissonCalibration) {
  const int reps = 60;
  double sum = 0, sum2 = 0, gsum = 0;
  auto cfg = small_cfg();
  auto gcfg = small_cfg(Statistic::g);
  for (int r = 0; r < reps; ++r) {
    const auto p = sim_poisson(IntensitySpec::constant(200), Domain::planar({0, 1, 0, 1}, {0, 1}), 500 + r);
    std::vector<double> lam(p.size(), 200.0);
    const double k = second_order_global(p, lam, cfg).estimate(1, 1);
    sum += k, sum2 += k * k;
    gsum += second_order_global(p, lam, gcfg).estimate(2, 1);
  }
  const double mean = sum / reps, se = std::sqrt((sum2 / reps - mean * mean) / (reps - 1));
  EXPECT_NEAR(mean, 2 * std::numbers::pi * 0.01 * 0.1, 3 * se);
  EXPECT_NEAR(gsum / reps, 1.0, 0.15);
}
