#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <utility>
#include <vector>

#include "stpp/error.hpp"
#include "stpp/random.hpp"

namespace stpp {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

// A location on a network: segment index plus arc length from the
// segment's first endpoint.
struct NetworkPoint {
  std::size_t segment = 0;
  double offset = 0.0;
};

struct Segment {
  std::size_t from = 0;
  std::size_t to = 0;
};

inline constexpr double kNetworkTolerance = 1e-9;

// Undirected graph of straight segments. All-pairs vertex distances are
// computed once at construction so the object is immutable afterwards and
// every query is a pure function.
class LinearNetwork {
 public:
  LinearNetwork(std::vector<Vec2> vertices, std::vector<Segment> segments)
      : vertices_(std::move(vertices)), segments_(std::move(segments)) {
    if (vertices_.empty() || segments_.empty())
      throw InvalidArgument("network needs at least one vertex and one segment");
    std::set<std::pair<std::size_t, std::size_t>> seen;
    adjacency_.assign(vertices_.size(), {});
    lengths_.reserve(segments_.size());
    cumulative_.reserve(segments_.size());
    for (std::size_t s = 0; s < segments_.size(); ++s) {
      const auto [u, v] = segments_[s];
      if (u >= vertices_.size() || v >= vertices_.size())
        throw InvalidArgument("segment " + std::to_string(s) + " has a vertex index out of range");
      const double len = stpp::distance(vertices_[u], vertices_[v]);
      if (!(len > 0.0))
        throw InvalidArgument("segment " + std::to_string(s) + " has zero length");
      if (!seen.insert({std::min(u, v), std::max(u, v)}).second)
        throw InvalidArgument("duplicate segment " + std::to_string(s));
      lengths_.push_back(len);
      total_length_ += len;
      cumulative_.push_back(total_length_);
      adjacency_[u].push_back({v, len});
      adjacency_[v].push_back({u, len});
    }
    compute_vertex_distances();
  }

  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::vector<Segment>& segments() const { return segments_; }
  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t segment_count() const { return segments_.size(); }
  double length(std::size_t segment) const { return lengths_.at(segment); }
  double total_length() const { return total_length_; }

  // Shortest-path distance between two vertices (+inf if disconnected).
  double vertex_distance(std::size_t u, std::size_t v) const {
    return vertex_dist_[u * vertices_.size() + v];
  }

  Vec2 position(NetworkPoint p) const {
    check(p);
    const auto& seg = segments_[p.segment];
    const double f = p.offset / lengths_[p.segment];
    const Vec2 a = vertices_[seg.from], b = vertices_[seg.to];
    return {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)};
  }

  struct Projection {
    NetworkPoint point;
    double distance = 0.0;
  };

  // Nearest network location to q; ties resolve to the lowest segment index.
  Projection project(Vec2 q) const {
    Projection best{{0, 0.0}, std::numeric_limits<double>::infinity()};
    for (std::size_t s = 0; s < segments_.size(); ++s) {
      const Vec2 a = vertices_[segments_[s].from], b = vertices_[segments_[s].to];
      const double dx = b.x - a.x, dy = b.y - a.y;
      const double len = lengths_[s];
      double u = ((q.x - a.x) * dx + (q.y - a.y) * dy) / (len * len);
      u = std::clamp(u, 0.0, 1.0);
      const Vec2 p{a.x + u * dx, a.y + u * dy};
      const double d = stpp::distance(p, q);
      if (d < best.distance) best = {{s, u * len}, d};
    }
    return best;
  }

  // Distances from p to every vertex.
  std::vector<double> distances_to_vertices(NetworkPoint p) const {
    check(p);
    const auto& seg = segments_[p.segment];
    const double to_from = p.offset, to_to = lengths_[p.segment] - p.offset;
    std::vector<double> out(vertices_.size());
    for (std::size_t v = 0; v < vertices_.size(); ++v)
      out[v] = std::min(to_from + vertex_distance(seg.from, v), to_to + vertex_distance(seg.to, v));
    return out;
  }

  double distance(NetworkPoint a, NetworkPoint b) const {
    check(a);
    check(b);
    double best = std::numeric_limits<double>::infinity();
    if (a.segment == b.segment) best = std::abs(a.offset - b.offset);
    const auto& sa = segments_[a.segment];
    const auto& sb = segments_[b.segment];
    const std::pair<std::size_t, double> ea[2] = {{sa.from, a.offset},
                                                  {sa.to, lengths_[a.segment] - a.offset}};
    const std::pair<std::size_t, double> eb[2] = {{sb.from, b.offset},
                                                  {sb.to, lengths_[b.segment] - b.offset}};
    for (const auto& [va, da] : ea)
      for (const auto& [vb, db] : eb) best = std::min(best, da + vertex_distance(va, vb) + db);
    return best;
  }

  // Number of network locations at shortest-path distance exactly r from
  // origin. `vertex_dist` must be distances_to_vertices(origin).
  int equidistant_count(NetworkPoint origin, const std::vector<double>& vertex_dist, double r,
                        double tol = kNetworkTolerance) const {
    if (r < 0.0) throw InvalidArgument("equidistant_count: negative distance");
    if (r == 0.0) return 1;
    int count = 0;
    for (double dv : vertex_dist)
      if (std::abs(dv - r) <= tol) ++count;

    std::vector<double> roots;
    for (std::size_t s = 0; s < segments_.size(); ++s) {
      const double len = lengths_[s];
      const double dp = vertex_dist[segments_[s].from];
      const double dq = vertex_dist[segments_[s].to];
      const bool own = s == origin.segment;
      const double o = origin.offset;
      auto along = [&](double pos) {
        double f = std::min(dp + pos, dq + len - pos);
        if (own) f = std::min(f, std::abs(pos - o));
        return f;
      };
      roots.clear();
      auto consider = [&](double pos) {
        if (!std::isfinite(pos) || pos <= tol || pos >= len - tol) return;
        if (std::abs(along(pos) - r) <= tol) roots.push_back(pos);
      };
      consider(r - dp);
      consider(len - (r - dq));
      if (own) {
        consider(o - r);
        consider(o + r);
      }
      std::sort(roots.begin(), roots.end());
      for (std::size_t k = 0; k < roots.size(); ++k)
        if (k == 0 || roots[k] - roots[k - 1] > tol) ++count;
    }
    return count;
  }

  int equidistant_count(NetworkPoint origin, double r) const {
    return equidistant_count(origin, distances_to_vertices(origin), r);
  }

  // Location at arc length s along the concatenation of all segments.
  NetworkPoint point_at_arclength(double s) const {
    s = std::clamp(s, 0.0, total_length_);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    std::size_t seg = it == cumulative_.end() ? segments_.size() - 1
                                              : static_cast<std::size_t>(it - cumulative_.begin());
    const double start = seg == 0 ? 0.0 : cumulative_[seg - 1];
    return {seg, std::clamp(s - start, 0.0, lengths_[seg])};
  }

  NetworkPoint uniform_point(Rng& rng) const { return point_at_arclength(rng.uniform() * total_length_); }

  // Largest finite vertex-to-vertex distance.
  double diameter() const {
    double d = 0.0;
    for (double v : vertex_dist_)
      if (std::isfinite(v)) d = std::max(d, v);
    return d;
  }

  struct Box {
    double x0, x1, y0, y1;
  };
  Box bounding_box() const {
    Box b{vertices_[0].x, vertices_[0].x, vertices_[0].y, vertices_[0].y};
    for (const auto& v : vertices_) {
      b.x0 = std::min(b.x0, v.x);
      b.x1 = std::max(b.x1, v.x);
      b.y0 = std::min(b.y0, v.y);
      b.y1 = std::max(b.y1, v.y);
    }
    return b;
  }
  double bounding_diagonal() const {
    const Box b = bounding_box();
    return std::hypot(b.x1 - b.x0, b.y1 - b.y0);
  }

  void check(NetworkPoint p) const {
    if (p.segment >= segments_.size())
      throw InvalidArgument("network point refers to segment " + std::to_string(p.segment) +
                            " which does not exist");
    if (p.offset < -kNetworkTolerance || p.offset > lengths_[p.segment] + kNetworkTolerance)
      throw InvalidArgument("network point offset outside its segment");
  }

 private:
  struct Arc {
    std::size_t to;
    double length;
  };

  void compute_vertex_distances() {
    const std::size_t n = vertices_.size();
    vertex_dist_.assign(n * n, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, std::size_t>;
    for (std::size_t src = 0; src < n; ++src) {
      double* dist = &vertex_dist_[src * n];
      std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
      dist[src] = 0.0;
      queue.push({0.0, src});
      while (!queue.empty()) {
        auto [d, u] = queue.top();
        queue.pop();
        if (d > dist[u]) continue;
        for (const Arc& a : adjacency_[u]) {
          const double nd = d + a.length;
          if (nd < dist[a.to]) {
            dist[a.to] = nd;
            queue.push({nd, a.to});
          }
        }
      }
    }
  }

  std::vector<Vec2> vertices_;
  std::vector<Segment> segments_;
  std::vector<double> lengths_;
  std::vector<double> cumulative_;
  std::vector<std::vector<Arc>> adjacency_;
  std::vector<double> vertex_dist_;
  double total_length_ = 0.0;
};

}  // namespace stpp
