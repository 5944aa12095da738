#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "stpp/error.hpp"
#include "stpp/network.hpp"
#include "stpp/pattern.hpp"

namespace stpp::io {

// 17 significant digits: parses back to the identical double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline double to_double(std::string_view s, const std::string& context) {
  double v;
  if (!parse_double(s, v)) throw InvalidArgument("cannot parse '" + std::string(s) + "' as a number in " + context);
  return v;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::string trim_cell(std::string s) {
  auto first = s.find_first_not_of(" \t\r");
  auto last = s.find_last_not_of(" \t\r");
  if (first == std::string::npos) return {};
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim_cell(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline Table read_csv(std::istream& in) {
  Table t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw InvalidArgument("CSV row has " + std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw InvalidArgument("CSV input is empty");
  return t;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path + "' for reading");
  return in;
}
inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open '" + path + "' for writing");
  return out;
}

// Builds a pattern from a table whose first three columns are x, y, t.
// Remaining columns become marks: all-numeric columns are continuous, the
// rest categorical.
inline PointPattern pattern_from_table(const Table& table, const PatternOptions& opts = {}) {
  if (table.header.size() < 3) throw InvalidArgument("pattern table needs columns x, y, t");
  if (table.rows.empty() && !(opts.window && opts.interval))
    throw InvalidArgument("pattern table has no rows");
  std::vector<Event> events;
  events.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string ctx = "row " + std::to_string(r + 1);
    events.push_back({to_double(row[0], ctx), to_double(row[1], ctx), to_double(row[2], ctx)});
  }
  std::vector<MarkColumn> marks;
  for (std::size_t c = 3; c < table.header.size(); ++c) {
    std::vector<double> numeric;
    std::vector<std::string> labels;
    bool all_numeric = true;
    for (const auto& row : table.rows) {
      labels.push_back(row[c]);
      double v;
      if (all_numeric && parse_double(row[c], v))
        numeric.push_back(v);
      else
        all_numeric = false;
    }
    const std::string name = table.header[c].empty() ? "mark" + std::to_string(c - 2) : table.header[c];
    marks.push_back(all_numeric && !table.rows.empty() ? MarkColumn::continuous(name, std::move(numeric))
                                                       : MarkColumn::categorical(name, labels));
  }
  return PointPattern::make(std::move(events), std::move(marks), opts);
}

inline void write_pattern_csv(std::ostream& out, const PointPattern& p) {
  out << "x,y,t";
  for (const auto& m : p.marks()) out << ',' << m.name;
  out << '\n';
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& e = p[i];
    out << format_double(e.x) << ',' << format_double(e.y) << ',' << format_double(e.t);
    for (const auto& m : p.marks()) out << ',' << (m.is_categorical() ? m.label(i) : format_double(m.values[i]));
    out << '\n';
  }
}

inline PointPattern read_pattern_csv(std::istream& in, const PatternOptions& opts = {}) {
  return pattern_from_table(read_csv(in), opts);
}

inline void write_pattern_csv(const std::string& path, const PointPattern& p) {
  auto out = open_out(path);
  write_pattern_csv(out, p);
}
inline PointPattern read_pattern_csv(const std::string& path, const PatternOptions& opts = {}) {
  auto in = open_in(path);
  return read_pattern_csv(in, opts);
}

// {"vertices": [[x,y],...], "segments": [[u,v],...]}, 0-based indices.
inline LinearNetwork network_from_json(const nlohmann::json& j) {
  if (!j.contains("vertices") || !j.contains("segments"))
    throw InvalidArgument("network JSON needs 'vertices' and 'segments'");
  std::vector<Vec2> vertices;
  for (const auto& v : j.at("vertices")) {
    if (!v.is_array() || v.size() != 2) throw InvalidArgument("network vertex must be [x, y]");
    vertices.push_back({v[0].get<double>(), v[1].get<double>()});
  }
  std::vector<Segment> segments;
  for (const auto& s : j.at("segments")) {
    if (!s.is_array() || s.size() != 2) throw InvalidArgument("network segment must be [u, v]");
    const auto u = s[0].get<long long>(), v = s[1].get<long long>();
    if (u < 0 || v < 0) throw InvalidArgument("negative vertex index in network segment");
    segments.push_back({static_cast<std::size_t>(u), static_cast<std::size_t>(v)});
  }
  return LinearNetwork(std::move(vertices), std::move(segments));
}

inline nlohmann::json network_to_json(const LinearNetwork& net) {
  nlohmann::json j;
  j["vertices"] = nlohmann::json::array();
  for (const auto& v : net.vertices()) j["vertices"].push_back({v.x, v.y});
  j["segments"] = nlohmann::json::array();
  for (const auto& s : net.segments()) j["segments"].push_back({s.from, s.to});
  return j;
}

inline LinearNetwork read_network_json(const std::string& path) {
  auto in = open_in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("malformed network JSON '" + path + "': " + e.what());
  }
  return network_from_json(j);
}

// One value per line (optional header line that is not a number).
inline std::vector<double> read_values(std::istream& in) {
  std::vector<double> values;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    auto cell = trim_cell(line);
    if (cell.empty()) continue;
    if (auto comma = cell.find(','); comma != std::string::npos) cell = trim_cell(cell.substr(0, comma));
    double v;
    if (parse_double(cell, v)) {
      values.push_back(v);
    } else if (!first) {
      throw InvalidArgument("cannot parse '" + cell + "' as a number");
    }
    first = false;
  }
  return values;
}

inline std::vector<double> read_values(const std::string& path) {
  auto in = open_in(path);
  return read_values(in);
}

}  // namespace stpp::io
