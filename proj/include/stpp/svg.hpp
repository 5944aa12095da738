#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace stpp::svg {

namespace detail {

// Eight anchors of a viridis-like ramp, interpolated linearly.
inline std::string colour(double u) {
  static constexpr std::array<std::array<int, 3>, 8> ramp{{{68, 1, 84},
                                                          {70, 50, 127},
                                                          {54, 92, 141},
                                                          {39, 127, 142},
                                                          {31, 161, 135},
                                                          {74, 194, 109},
                                                          {159, 218, 58},
                                                          {253, 231, 37}}};
  if (!std::isfinite(u)) u = 0.0;
  u = std::clamp(u, 0.0, 1.0) * 7.0;
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(u), 6);
  const double f = u - static_cast<double>(k);
  char buf[8];
  int rgb[3];
  for (int c = 0; c < 3; ++c)
    rgb[c] = static_cast<int>(std::lround(ramp[k][static_cast<std::size_t>(c)] * (1.0 - f) +
                                          ramp[k + 1][static_cast<std::size_t>(c)] * f));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace detail

// Heatmap of z (rows along x, columns along y) with axis labels.
inline std::string heatmap(const Eigen::MatrixXd& z, const std::vector<double>& xs, const std::vector<double>& ys,
                           const std::string& title, const std::string& xlabel = "r", const std::string& ylabel = "h") {
  const int cell = 28, left = 60, top = 40, bottom = 50, right = 90;
  const auto nx = static_cast<int>(z.rows()), ny = static_cast<int>(z.cols());
  const int w = left + nx * cell + right, h = top + ny * cell + bottom;
  double lo = z.size() ? z.minCoeff() : 0.0, hi = z.size() ? z.maxCoeff() : 1.0;
  if (!(hi > lo)) hi = lo + 1.0;

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
                  std::to_string(h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + std::to_string(left) + "\" y=\"20\" font-size=\"14\">" + detail::escape(title) + "</text>\n";
  for (int a = 0; a < nx; ++a)
    for (int b = 0; b < ny; ++b) {
      const int px = left + a * cell, py = top + (ny - 1 - b) * cell;
      s += "<rect x=\"" + std::to_string(px) + "\" y=\"" + std::to_string(py) + "\" width=\"" + std::to_string(cell) +
           "\" height=\"" + std::to_string(cell) + "\" fill=\"" + detail::colour((z(a, b) - lo) / (hi - lo)) + "\"/>\n";
    }
  for (int a = 0; a < nx && a < static_cast<int>(xs.size()); a += std::max(1, nx / 5))
    s += "<text x=\"" + std::to_string(left + a * cell + cell / 2) + "\" y=\"" + std::to_string(top + ny * cell + 15) +
         "\" text-anchor=\"middle\">" + detail::num(xs[static_cast<std::size_t>(a)]) + "</text>\n";
  for (int b = 0; b < ny && b < static_cast<int>(ys.size()); b += std::max(1, ny / 5))
    s += "<text x=\"" + std::to_string(left - 5) + "\" y=\"" + std::to_string(top + (ny - 1 - b) * cell + cell / 2 + 4) +
         "\" text-anchor=\"end\">" + detail::num(ys[static_cast<std::size_t>(b)]) + "</text>\n";
  s += "<text x=\"" + std::to_string(left + nx * cell / 2) + "\" y=\"" + std::to_string(h - 12) +
       "\" text-anchor=\"middle\">" + detail::escape(xlabel) + "</text>\n";
  s += "<text x=\"15\" y=\"" + std::to_string(top + ny * cell / 2) + "\">" + detail::escape(ylabel) + "</text>\n";

  // Colour bar.
  const int bx = left + nx * cell + 20, bh = ny * cell;
  for (int k = 0; k < 20; ++k) {
    const double u = (19.0 - k) / 19.0;
    s += "<rect x=\"" + std::to_string(bx) + "\" y=\"" + std::to_string(top + k * bh / 20) + "\" width=\"14\" height=\"" +
         std::to_string(bh / 20 + 1) + "\" fill=\"" + detail::colour(u) + "\"/>\n";
  }
  s += "<text x=\"" + std::to_string(bx + 18) + "\" y=\"" + std::to_string(top + 8) + "\">" + detail::num(hi) + "</text>\n";
  s += "<text x=\"" + std::to_string(bx + 18) + "\" y=\"" + std::to_string(top + bh) + "\">" + detail::num(lo) + "</text>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace stpp::svg
