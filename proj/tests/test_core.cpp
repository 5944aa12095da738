#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "stpp/io.hpp"
#include "stpp/network.hpp"
#include "stpp/parallel.hpp"
#include "stpp/pattern.hpp"
#include "stpp/random.hpp"

using namespace stpp;

namespace {

LinearNetwork path_graph() { return LinearNetwork({{0, 0}, {1, 0}, {1, 1}}, {{0, 1}, {1, 2}}); }

LinearNetwork unit_cycle() { return LinearNetwork({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}); }

// Small graph with a chord, a pendant edge and a diagonal.
LinearNetwork six_vertex() {
  return LinearNetwork({{0, 0}, {2, 0}, {2, 1}, {0, 1}, {1, 2}, {3, 1.5}},
                       {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {3, 4}, {4, 2}, {2, 5}, {0, 2}});
}

// Oracle: subdivide at a and b, then minimise over all simple paths by DFS.
double enumerate_paths(const LinearNetwork& net, NetworkPoint a, NetworkPoint b) {
  struct Edge {
    int to;
    double len;
  };
  std::vector<Vec2> nodes(net.vertices().begin(), net.vertices().end());
  std::vector<std::vector<Edge>> adj(nodes.size() + 2);
  const int na = static_cast<int>(nodes.size()), nb = na + 1;
  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    const auto seg = net.segments()[s];
    std::vector<std::pair<double, int>> cuts{{0.0, static_cast<int>(seg.from)}, {net.length(s), static_cast<int>(seg.to)}};
    if (a.segment == s) cuts.push_back({a.offset, na});
    if (b.segment == s) cuts.push_back({b.offset, nb});
    std::stable_sort(cuts.begin(), cuts.end(), [](auto& l, auto& r) { return l.first < r.first; });
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      const double len = cuts[k + 1].first - cuts[k].first;
      adj[static_cast<std::size_t>(cuts[k].second)].push_back({cuts[k + 1].second, len});
      adj[static_cast<std::size_t>(cuts[k + 1].second)].push_back({cuts[k].second, len});
    }
  }
  double best = std::numeric_limits<double>::infinity();
  std::vector<char> seen(adj.size(), 0);
  std::function<void(int, double)> dfs = [&](int u, double acc) {
    if (u == nb) {
      best = std::min(best, acc);
      return;
    }
    seen[static_cast<std::size_t>(u)] = 1;
    for (const auto& e : adj[static_cast<std::size_t>(u)])
      if (!seen[static_cast<std::size_t>(e.to)]) dfs(e.to, acc + e.len);
    seen[static_cast<std::size_t>(u)] = 0;
  };
  dfs(na, 0.0);
  return best;
}

// Oracle: number of locations at distance r, by sign changes along a dense
// walk of every segment plus exact vertex hits.
int dense_count(const LinearNetwork& net, NetworkPoint origin, double r, int per_segment = 20000) {
  int count = 0;
  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    const double len = net.length(s);
    double prev = net.distance(origin, {s, 0.0}) - r;
    for (int k = 1; k <= per_segment; ++k) {
      const double cur = net.distance(origin, {s, len * k / per_segment}) - r;
      if ((prev < 0) != (cur < 0) && k < per_segment) ++count;
      else if ((prev < 0) != (cur < 0) && k == per_segment && std::abs(cur) > 1e-9) ++count;
      prev = cur;
    }
  }
  for (std::size_t v = 0; v < net.vertices().size(); ++v) {
    // Vertex hits: count the vertex once.
    for (std::size_t s = 0; s < net.segment_count(); ++s) {
      const auto seg = net.segments()[s];
      if (seg.from == v || seg.to == v) {
        const double d = net.distance(origin, {s, seg.from == v ? 0.0 : net.length(s)});
        if (std::abs(d - r) < 1e-9) ++count;
        break;
      }
    }
  }
  return count;
}

}  // namespace

TEST(Random, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(a(), b());
}

TEST(Random, SubstreamsDiffer) {
  Rng base(7);
  auto s0 = base.substream(0), s1 = base.substream(1);
  EXPECT_NE(s0(), s1());
  auto again = base.substream(1);
  auto s1b = base.substream(1);
  EXPECT_EQ(again(), s1b());
}

TEST(Random, UniformInUnitInterval) {
  Rng r(1);
  for (int k = 0; k < 10000; ++k) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_GT(r.uniform_pos(), 0.0);
  }
}

TEST(Parallel, ResultIndependentOfThreads) {
  std::vector<double> a(1000), b(1000);
  parallel_for(1000, [&](std::size_t i) { a[i] = std::sin(static_cast<double>(i)); }, 1);
  parallel_for(1000, [&](std::size_t i) { b[i] = std::sin(static_cast<double>(i)); }, 4);
  EXPECT_EQ(a, b);
}

TEST(Parallel, RethrowsWorkerException) {
  EXPECT_THROW(parallel_for(10, [](std::size_t i) { if (i == 3) throw InvalidArgument("boom"); }, 2), InvalidArgument);
}

TEST(Window, Invariants) {
  SpatialWindow w{0, 2, 0, 3};
  EXPECT_DOUBLE_EQ(w.area(), 6.0);
  EXPECT_THROW((SpatialWindow{1, 1, 0, 1}.validate()), InvalidArgument);
  EXPECT_THROW((TimeInterval{2, 1}.validate()), InvalidArgument);
}

TEST(TemporalMultiplicity, Cases) {
  const TimeInterval iv{0, 1};
  EXPECT_EQ(temporal_multiplicity(iv, 0.5, 0.2), 2);
  EXPECT_EQ(temporal_multiplicity(iv, 0.1, 0.2), 1);
  EXPECT_EQ(temporal_multiplicity(iv, 0.5, 0.8), 0);
}

TEST(Network, RejectsBadInput) {
  EXPECT_THROW(LinearNetwork({}, {}), InvalidArgument);
  EXPECT_THROW(LinearNetwork({{0, 0}, {1, 0}}, {{0, 2}}), InvalidArgument);
  EXPECT_THROW(LinearNetwork({{0, 0}, {0, 0}}, {{0, 1}}), InvalidArgument);
  EXPECT_THROW(LinearNetwork({{0, 0}, {1, 0}}, {{0, 1}, {1, 0}}), InvalidArgument);
}

TEST(Network, TotalLength) {
  EXPECT_DOUBLE_EQ(path_graph().total_length(), 2.0);
  EXPECT_DOUBLE_EQ(unit_cycle().total_length(), 4.0);
}

TEST(NetworkDistance, Identity) {
  const auto net = six_vertex();
  EXPECT_EQ(net.distance({3, 0.4}, {3, 0.4}), 0.0);
}

TEST(NetworkDistance, PathGraphHandComputed) {
  const auto net = path_graph();
  EXPECT_NEAR(net.distance({0, 0.5}, {1, 1.0}), 1.5, 1e-12);
}

TEST(NetworkDistance, CycleAntipodal) {
  const auto net = unit_cycle();
  const NetworkPoint a{0, 0.5}, b{2, 0.5};
  EXPECT_NEAR(net.distance(a, b), 2.0, 1e-12);
  EXPECT_NEAR(net.distance(a, b), enumerate_paths(net, a, b), 1e-12);
}

TEST(NetworkDistance, MatchesPathEnumeration) {
  const auto net = six_vertex();
  Rng rng(11);
  for (int k = 0; k < 200; ++k) {
    const auto a = net.uniform_point(rng), b = net.uniform_point(rng);
    EXPECT_NEAR(net.distance(a, b), enumerate_paths(net, a, b), 1e-12);
  }
}

TEST(NetworkDistance, SameSegmentDirectPath) {
  const auto net = unit_cycle();
  EXPECT_NEAR(net.distance({0, 0.1}, {0, 0.9}), 0.8, 1e-12);
}

TEST(NetworkDistance, Disconnected) {
  const LinearNetwork net({{0, 0}, {1, 0}, {3, 0}, {4, 0}}, {{0, 1}, {2, 3}});
  EXPECT_TRUE(std::isinf(net.distance({0, 0.5}, {1, 0.5})));
}

TEST(NetworkDistance, MetricOnTwentySegmentFixture) {
  std::vector<Vec2> v;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 4; ++i) v.push_back({static_cast<double>(i), static_cast<double>(j) * 1.3});
  std::vector<Segment> s;
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t i = 0; i < 4; ++i) {
      if (i < 3) s.push_back({j * 4 + i, j * 4 + i + 1});
      if (j < 2) s.push_back({j * 4 + i, (j + 1) * 4 + i});
    }
  s.push_back({0, 5});
  s.push_back({6, 11});
  s.push_back({2, 7});
  const LinearNetwork net(v, s);
  ASSERT_EQ(net.segment_count(), 20u);
  Rng rng(5);
  for (int k = 0; k < 300; ++k) {
    const auto a = net.uniform_point(rng), b = net.uniform_point(rng), c = net.uniform_point(rng);
    const double ab = net.distance(a, b), ba = net.distance(b, a);
    EXPECT_GE(ab, 0.0);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_LE(ab, net.distance(a, c) + net.distance(c, b) + 1e-12);
  }
}

TEST(EquidistantCount, ZeroRadiusIsOne) {
  EXPECT_EQ(unit_cycle().equidistant_count({1, 0.3}, 0.0), 1);
}

TEST(EquidistantCount, StraightSegmentMidpoint) {
  const LinearNetwork net({{0, 0}, {2, 0}}, {{0, 1}});
  EXPECT_EQ(net.equidistant_count({0, 1.0}, 0.5), 2);
}

TEST(EquidistantCount, CycleFromVertex) {
  const auto net = unit_cycle();
  const NetworkPoint origin{0, 0.0};
  EXPECT_EQ(net.equidistant_count(origin, 1.5), 2);
  EXPECT_EQ(dense_count(net, origin, 1.5), 2);
}

TEST(EquidistantCount, BeyondEccentricityIsZero) {
  EXPECT_EQ(path_graph().equidistant_count({0, 0.0}, 5.0), 0);
}

TEST(EquidistantCount, NegativeRadiusThrows) {
  EXPECT_THROW(unit_cycle().equidistant_count({0, 0.5}, -0.1), InvalidArgument);
}

TEST(EquidistantCount, MatchesDenseSampling) {
  const auto net = six_vertex();
  Rng rng(3);
  for (int k = 0; k < 25; ++k) {
    const auto o = net.uniform_point(rng);
    const double r = 0.1 + 2.5 * rng.uniform();
    EXPECT_EQ(net.equidistant_count(o, r), dense_count(net, o, r, 4000)) << "origin seg " << o.segment << " r " << r;
  }
}

TEST(EquidistantCount, DerivativeOfBallMeasure) {
  // |{u : d(o,u) <= r}| has derivative m_L(o, r) at continuity points.
  const auto net = six_vertex();
  const NetworkPoint o{0, 0.7};
  const int per = 4000;
  std::vector<double> d;
  for (std::size_t s = 0; s < net.segment_count(); ++s)
    for (int k = 0; k < per; ++k) d.push_back(net.distance(o, {s, net.length(s) * (k + 0.5) / per}));
  auto measure = [&](double r) {
    double m = 0.0;
    for (std::size_t s = 0, idx = 0; s < net.segment_count(); ++s)
      for (int k = 0; k < per; ++k, ++idx)
        if (d[idx] <= r) m += net.length(s) / per;
    return m;
  };
  double last = -1.0;
  for (double r : {0.3, 0.9, 1.5, 2.0, 2.5}) {
    const double eps = 0.02;
    const double deriv = (measure(r + eps) - measure(r - eps)) / (2 * eps);
    EXPECT_NEAR(deriv, net.equidistant_count(o, r), 0.15) << "r=" << r;
    const double m = measure(r);
    EXPECT_GE(m, last);
    last = m;
  }
}

TEST(Pattern, EnclosingWindowAndInterval) {
  Rng rng(2);
  std::vector<Event> ev;
  for (int k = 0; k < 100; ++k) ev.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  const auto p = PointPattern::make(ev);
  double x0 = 1, x1 = 0, t0 = 1, t1 = 0;
  for (const auto& e : ev) {
    x0 = std::min(x0, e.x), x1 = std::max(x1, e.x);
    t0 = std::min(t0, e.t), t1 = std::max(t1, e.t);
  }
  EXPECT_EQ(p.size(), 100u);
  EXPECT_EQ(p.window().x0, x0);
  EXPECT_EQ(p.window().x1, x1);
  EXPECT_EQ(p.interval().t0, t0);
  EXPECT_EQ(p.interval().t1, t1);
}

TEST(Pattern, SinglePointExplicitDomain) {
  PatternOptions po;
  po.window = SpatialWindow{0, 1, 0, 1};
  po.interval = TimeInterval{0, 1};
  const auto p = PointPattern::make({{0.5, 0.5, 0.5}}, {}, po);
  EXPECT_EQ(p.size(), 1u);
  EXPECT_EQ(p.window(), (SpatialWindow{0, 1, 0, 1}));
}

TEST(Pattern, CategoricalMarkLevels) {
  const auto m = MarkColumn::categorical("type", {"A", "A", "B"});
  const auto p = PointPattern::make({{0, 0, 0}, {1, 1, 1}, {0.5, 0.5, 0.5}}, {m});
  ASSERT_NE(p.mark("type"), nullptr);
  EXPECT_EQ(p.mark("type")->levels, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(p.mark("type")->level_counts(), (std::vector<std::size_t>{2, 1}));
}

TEST(Pattern, Errors) {
  EXPECT_THROW(PointPattern::make({}), InvalidArgument);
  EXPECT_THROW(PointPattern::make({{0, std::nan(""), 0}}), InvalidArgument);
  PatternOptions po;
  po.window = SpatialWindow{0, 1, 0, 1};
  po.interval = TimeInterval{0, 1};
  EXPECT_THROW(PointPattern::make({{2, 0.5, 0.5}}, {}, po), InvalidArgument);
  EXPECT_THROW(PointPattern::make({{0.5, 0.5, 0.5}}, {MarkColumn::continuous("m", {1, 2})}, po), InvalidArgument);
}

TEST(Pattern, SnapsToNetwork) {
  auto net = std::make_shared<const LinearNetwork>(path_graph());
  PatternOptions po;
  po.network = net;
  const auto p = PointPattern::make({{0.5, 0.01, 0.2}, {1.0, 0.25, 0.4}}, {}, po);
  EXPECT_EQ(p.network_coords()[0].segment, 0u);
  EXPECT_NEAR(p.network_coords()[0].offset, 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(p[0].y, 0.0);
  EXPECT_EQ(p.network_coords()[1].segment, 1u);
  EXPECT_NEAR(p.volume(), 2.0 * 0.2, 1e-12);
}

TEST(Pattern, SnapDistanceLimit) {
  auto net = std::make_shared<const LinearNetwork>(path_graph());
  PatternOptions po;
  po.network = net;
  EXPECT_THROW(PointPattern::make({{0.5, 0.5, 0.2}}, {}, po), InvalidArgument);
}

TEST(Io, CsvRoundTripIsExact) {
  Rng rng(9);
  std::vector<Event> ev;
  std::vector<double> mag;
  std::vector<std::string> lab;
  for (int k = 0; k < 50; ++k) {
    ev.push_back({rng.uniform(), rng.uniform() * 1e-7, 1e5 * rng.uniform()});
    mag.push_back(rng.normal());
    lab.push_back(k % 3 ? "a" : "b c");
  }
  const auto p = PointPattern::make(ev, {MarkColumn::continuous("mag", mag), MarkColumn::categorical("kind", lab)});
  std::stringstream ss;
  io::write_pattern_csv(ss, p);
  const auto q = io::read_pattern_csv(ss);
  ASSERT_EQ(q.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], q[i]);
  EXPECT_EQ(q.mark("mag")->values, mag);
  EXPECT_TRUE(q.mark("kind")->is_categorical());
  EXPECT_EQ(q.mark("kind")->codes, p.mark("kind")->codes);
}

TEST(Io, NetworkPatternRoundTrip) {
  auto net = std::make_shared<const LinearNetwork>(six_vertex());
  Rng rng(4);
  std::vector<Event> ev;
  for (int k = 0; k < 30; ++k) {
    const auto pos = net->position(net->uniform_point(rng));
    ev.push_back({pos.x, pos.y, rng.uniform()});
  }
  PatternOptions po;
  po.network = net;
  const auto p = PointPattern::make(ev, {}, po);
  std::stringstream ss;
  io::write_pattern_csv(ss, p);
  const auto q = io::read_pattern_csv(ss, po);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(p[i], q[i]);
    EXPECT_EQ(p.network_coords()[i].segment, q.network_coords()[i].segment);
    EXPECT_EQ(p.network_coords()[i].offset, q.network_coords()[i].offset);
  }
}

TEST(Io, NetworkJsonRoundTrip) {
  const auto net = six_vertex();
  const auto back = io::network_from_json(io::network_to_json(net));
  EXPECT_EQ(back.segment_count(), net.segment_count());
  EXPECT_EQ(back.total_length(), net.total_length());
}

TEST(Io, RejectsBadNumbers) {
  std::stringstream ss("x,y,t\n1,2,abc\n");
  EXPECT_THROW(io::read_pattern_csv(ss), InvalidArgument);
}
