#pragma once

// Plain-text network files.
//
// Segment file, one record per line:
//   <id>,<level>,<lat> <lon>;<lat> <lon>;...
// Edge file, one directed connection per line:
//   <from_id> <to_id>
// '#' starts a comment; blank lines are ignored.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rntraj/roadnet/network.hpp"

namespace rntraj::roadnet {

namespace io_detail {

inline std::string strip(std::string line) {
  if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
  const auto b = line.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = line.find_last_not_of(" \t\r");
  return line.substr(b, e - b + 1);
}

inline long long parse_int(const std::string& s, const std::string& where) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw FormatError(where + ": expected integer, got '" + s + "'");
  }
  if (strip(s.substr(pos)).size()) throw FormatError(where + ": trailing characters in '" + s + "'");
  return v;
}

inline double parse_double(const std::string& s, const std::string& where) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw FormatError(where + ": expected number, got '" + s + "'");
  }
  if (strip(s.substr(pos)).size()) throw FormatError(where + ": trailing characters in '" + s + "'");
  return v;
}

inline std::ifstream open(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  return is;
}

}  // namespace io_detail

inline std::vector<RoadSegment> read_segments(std::istream& is, const std::string& name = "segments") {
  std::vector<RoadSegment> out;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const std::string line = io_detail::strip(raw);
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw FormatError(where + ": expected 'id,level,polyline'");
    RoadSegment s;
    s.id = io_detail::parse_int(line.substr(0, c1), where);
    s.level = static_cast<int>(io_detail::parse_int(line.substr(c1 + 1, c2 - c1 - 1), where));
    std::stringstream pts(line.substr(c2 + 1));
    std::string pt;
    while (std::getline(pts, pt, ';')) {
      pt = io_detail::strip(pt);
      if (pt.empty()) continue;
      std::istringstream ps(pt);
      std::string a, b, extra;
      if (!(ps >> a >> b) || (ps >> extra)) throw FormatError(where + ": bad point '" + pt + "'");
      s.polyline.push_back({io_detail::parse_double(a, where), io_detail::parse_double(b, where)});
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<std::pair<long long, long long>> read_edges(std::istream& is,
                                                               const std::string& name = "edges") {
  std::vector<std::pair<long long, long long>> out;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const std::string line = io_detail::strip(raw);
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, extra;
    const std::string where = name + ":" + std::to_string(lineno);
    if (!(ls >> a >> b) || (ls >> extra)) throw FormatError(where + ": expected 'from_id to_id'");
    out.emplace_back(io_detail::parse_int(a, where), io_detail::parse_int(b, where));
  }
  return out;
}

inline RoadNetwork load_network(const std::string& segments_path, const std::string& edges_path,
                                double cell_size = 50.0) {
  auto ss = io_detail::open(segments_path);
  auto es = io_detail::open(edges_path);
  return RoadNetwork(read_segments(ss, segments_path), read_edges(es, edges_path), cell_size);
}

inline void write_segments(std::ostream& os, const RoadNetwork& net) {
  os << "# id,level,lat lon;lat lon;...\n";
  char buf[64];
  for (const auto& s : net.segments()) {
    os << s.id << ',' << s.level << ',';
    for (std::size_t i = 0; i < s.polyline.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g %.17g", s.polyline[i].lat, s.polyline[i].lon);
      os << (i ? ";" : "") << buf;
    }
    os << '\n';
  }
}

inline void write_edges(std::ostream& os, const RoadNetwork& net) {
  os << "# from_id to_id\n";
  for (const auto& [a, b] : net.edges()) os << net.segment(a).id << ' ' << net.segment(b).id << '\n';
}

inline void save_network(const std::string& segments_path, const std::string& edges_path,
                         const RoadNetwork& net) {
  std::ofstream ss(segments_path), es(edges_path);
  if (!ss || !es) throw FormatError("cannot write network files");
  write_segments(ss, net);
  write_edges(es, net);
}

}  // namespace rntraj::roadnet
