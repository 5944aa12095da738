#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stpp/error.hpp"
#include "stpp/network.hpp"

namespace stpp {

struct SpatialWindow {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  void validate() const {
    if (!(x0 < x1) || !(y0 < y1)) throw InvalidArgument("spatial window must have x0 < x1 and y0 < y1");
  }
  bool operator==(const SpatialWindow&) const = default;
};

struct TimeInterval {
  double t0 = 0.0, t1 = 1.0;

  double length() const { return t1 - t0; }
  bool contains(double t) const { return t >= t0 && t <= t1; }
  void validate() const {
    if (!(t0 < t1)) throw InvalidArgument("time interval must have t0 < t1");
  }
  bool operator==(const TimeInterval&) const = default;
};

// How many of the two instants t - lag, t + lag fall inside the interval.
inline int temporal_multiplicity(const TimeInterval& interval, double t, double lag) {
  return (t - lag >= interval.t0 ? 1 : 0) + (t + lag <= interval.t1 ? 1 : 0);
}

struct Event {
  double x = 0.0, y = 0.0, t = 0.0;
  bool operator==(const Event&) const = default;
};

// One mark column. Continuous marks keep `values`; categorical marks keep
// `codes` into `levels`, which are sorted lexicographically.
struct MarkColumn {
  enum class Kind { Continuous, Categorical };

  std::string name;
  Kind kind = Kind::Continuous;
  std::vector<double> values;
  std::vector<int> codes;
  std::vector<std::string> levels;

  static MarkColumn continuous(std::string name, std::vector<double> values) {
    MarkColumn m;
    m.name = std::move(name);
    m.values = std::move(values);
    return m;
  }

  static MarkColumn categorical(std::string name, const std::vector<std::string>& labels) {
    MarkColumn m;
    m.name = std::move(name);
    m.kind = Kind::Categorical;
    m.levels = labels;
    std::sort(m.levels.begin(), m.levels.end());
    m.levels.erase(std::unique(m.levels.begin(), m.levels.end()), m.levels.end());
    m.codes.reserve(labels.size());
    for (const auto& l : labels)
      m.codes.push_back(static_cast<int>(std::lower_bound(m.levels.begin(), m.levels.end(), l) -
                                         m.levels.begin()));
    return m;
  }

  bool is_categorical() const { return kind == Kind::Categorical; }
  std::size_t size() const { return is_categorical() ? codes.size() : values.size(); }
  std::string label(std::size_t i) const { return levels.at(static_cast<std::size_t>(codes.at(i))); }

  std::vector<std::size_t> level_counts() const {
    std::vector<std::size_t> counts(levels.size(), 0);
    for (int c : codes) ++counts[static_cast<std::size_t>(c)];
    return counts;
  }

  MarkColumn subset(const std::vector<std::size_t>& idx) const {
    MarkColumn m;
    m.name = name;
    m.kind = kind;
    m.levels = levels;
    for (std::size_t i : idx) {
      if (is_categorical())
        m.codes.push_back(codes[i]);
      else
        m.values.push_back(values[i]);
    }
    return m;
  }
};

struct PatternOptions {
  std::optional<SpatialWindow> window;
  std::optional<TimeInterval> interval;
  std::shared_ptr<const LinearNetwork> network;
  // Maximum snapping distance onto the network; defaults to 5% of the
  // network's bounding-box diagonal.
  std::optional<double> snap_max;
};

// Spatio-temporal point pattern on a rectangle or on a linear network.
class PointPattern {
 public:
  PointPattern() = default;

  static PointPattern make(std::vector<Event> events, std::vector<MarkColumn> marks = {},
                           const PatternOptions& opts = {}) {
    PointPattern p;
    for (const auto& e : events)
      if (!std::isfinite(e.x) || !std::isfinite(e.y) || !std::isfinite(e.t))
        throw InvalidArgument("non-finite event coordinate");
    p.events_ = std::move(events);
    p.marks_ = std::move(marks);
    p.network_ = opts.network;

    if (p.network_) {
      const double snap_max = opts.snap_max.value_or(0.05 * p.network_->bounding_diagonal());
      p.coords_.reserve(p.events_.size());
      for (auto& e : p.events_) {
        auto proj = p.network_->project({e.x, e.y});
        if (proj.distance > snap_max)
          throw InvalidArgument("event (" + std::to_string(e.x) + ", " + std::to_string(e.y) +
                                ") lies " + std::to_string(proj.distance) +
                                " from the network, beyond snap_max " + std::to_string(snap_max));
        // Points already on the network keep their coordinates untouched.
        if (proj.distance > kNetworkTolerance) {
          const Vec2 s = p.network_->position(proj.point);
          e.x = s.x;
          e.y = s.y;
        }
        p.coords_.push_back(proj.point);
      }
    }

    if (opts.window) {
      p.window_ = *opts.window;
    } else if (p.network_) {
      const auto b = p.network_->bounding_box();
      p.window_ = {b.x0, b.x1, b.y0, b.y1};
      const double pad = 0.5 * std::max(b.x1 - b.x0, b.y1 - b.y0);
      if (!(p.window_.x0 < p.window_.x1)) p.window_.x0 -= pad, p.window_.x1 += pad;
      if (!(p.window_.y0 < p.window_.y1)) p.window_.y0 -= pad, p.window_.y1 += pad;
    } else {
      if (p.events_.empty()) throw InvalidArgument("empty pattern needs an explicit window");
      p.window_ = enclosing_window(p.events_);
    }
    if (opts.interval) {
      p.interval_ = *opts.interval;
    } else {
      if (p.events_.empty()) throw InvalidArgument("empty pattern needs an explicit time interval");
      p.interval_ = enclosing_interval(p.events_);
    }
    p.window_.validate();
    p.interval_.validate();
    for (const auto& e : p.events_) {
      if (!p.window_.contains(e.x, e.y) || !p.interval_.contains(e.t))
        throw InvalidArgument("event outside the observation window or interval");
    }
    for (const auto& m : p.marks_) {
      if (m.size() != p.events_.size())
        throw InvalidArgument("mark column '" + m.name + "' has " + std::to_string(m.size()) +
                              " values for " + std::to_string(p.events_.size()) + " events");
      if (m.is_categorical() && m.levels.empty())
        throw InvalidArgument("categorical mark '" + m.name + "' has no levels");
    }
    return p;
  }

  static SpatialWindow enclosing_window(const std::vector<Event>& ev) {
    SpatialWindow w{ev[0].x, ev[0].x, ev[0].y, ev[0].y};
    for (const auto& e : ev) {
      w.x0 = std::min(w.x0, e.x);
      w.x1 = std::max(w.x1, e.x);
      w.y0 = std::min(w.y0, e.y);
      w.y1 = std::max(w.y1, e.y);
    }
    return w;
  }
  static TimeInterval enclosing_interval(const std::vector<Event>& ev) {
    TimeInterval iv{ev[0].t, ev[0].t};
    for (const auto& e : ev) {
      iv.t0 = std::min(iv.t0, e.t);
      iv.t1 = std::max(iv.t1, e.t);
    }
    return iv;
  }

  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }
  const std::vector<Event>& events() const { return events_; }
  const Event& operator[](std::size_t i) const { return events_[i]; }
  const std::vector<MarkColumn>& marks() const { return marks_; }
  const SpatialWindow& window() const { return window_; }
  const TimeInterval& interval() const { return interval_; }
  const std::shared_ptr<const LinearNetwork>& network() const { return network_; }
  bool on_network() const { return static_cast<bool>(network_); }
  const std::vector<NetworkPoint>& network_coords() const { return coords_; }

  const MarkColumn* mark(const std::string& name) const {
    for (const auto& m : marks_)
      if (m.name == name) return &m;
    return nullptr;
  }

  // |W||T| for planar patterns, |L||T| on a network.
  double volume() const {
    return (network_ ? network_->total_length() : window_.area()) * interval_.length();
  }
  double spatial_measure() const { return network_ ? network_->total_length() : window_.area(); }

  PointPattern subset(const std::vector<std::size_t>& idx) const {
    PointPattern p;
    p.window_ = window_;
    p.interval_ = interval_;
    p.network_ = network_;
    for (std::size_t i : idx) {
      p.events_.push_back(events_.at(i));
      if (network_) p.coords_.push_back(coords_[i]);
    }
    for (const auto& m : marks_) p.marks_.push_back(m.subset(idx));
    return p;
  }

  // Pattern with the same domain and no events.
  PointPattern empty_like() const { return subset({}); }

 private:
  std::vector<Event> events_;
  std::vector<MarkColumn> marks_;
  SpatialWindow window_;
  TimeInterval interval_;
  std::shared_ptr<const LinearNetwork> network_;
  std::vector<NetworkPoint> coords_;
};

}  // namespace stpp
