#pragma once

// Recovery metrics over (truth, prediction) matched-trajectory pairs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rntraj/errors.hpp"
#include "rntraj/mapmatch/route.hpp"
#include "rntraj/traj/trajectory.hpp"

namespace rntraj::eval {

using mapmatch::Location;
using mapmatch::Router;
using roadnet::SegIndex;
using traj::MatchedTrajectory;

struct Prf {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

inline double safe_ratio(double a, double b) { return b > 0 ? a / b : 0.0; }

// Set semantics over segment ids; every 0/0 is 0.
inline Prf path_prf(const std::vector<SegIndex>& truth, const std::vector<SegIndex>& pred) {
  const std::set<SegIndex> a(truth.begin(), truth.end());
  const std::set<SegIndex> b(pred.begin(), pred.end());
  std::size_t common = 0;
  for (SegIndex s : a) common += b.count(s);
  Prf r;
  r.recall = safe_ratio(static_cast<double>(common), static_cast<double>(a.size()));
  r.precision = safe_ratio(static_cast<double>(common), static_cast<double>(b.size()));
  r.f1 = safe_ratio(2.0 * r.recall * r.precision, r.recall + r.precision);
  return r;
}

inline std::vector<SegIndex> segments_of(const MatchedTrajectory& t) {
  std::vector<SegIndex> out;
  out.reserve(t.size());
  for (const auto& p : t.points) out.push_back(p.segment);
  return out;
}

inline double accuracy(const std::vector<SegIndex>& truth, const std::vector<SegIndex>& pred) {
  if (truth.size() != pred.size()) {
    throw ContractError("accuracy: lengths differ (" + std::to_string(truth.size()) + " vs " +
                        std::to_string(pred.size()) + ")");
  }
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == pred[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

// Shorter of the two driving directions; kUnreachable when neither exists.
inline double network_distance(Router& router, Location a, Location b) {
  return std::min(router.distance(a, b), router.distance(b, a));
}

struct ErrorStats {
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t counted = 0;
  std::size_t unreachable = 0;
};

inline ErrorStats mae_rmse(const MatchedTrajectory& truth, const MatchedTrajectory& pred, Router& router) {
  if (truth.size() != pred.size()) throw ContractError("mae_rmse: lengths differ");
  ErrorStats s;
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = network_distance(router, {truth.points[i].segment, truth.points[i].ratio},
                                      {pred.points[i].segment, pred.points[i].ratio});
    if (!mapmatch::reachable(d)) {
      ++s.unreachable;
      continue;
    }
    sum += d;
    sq += d * d;
    ++s.counted;
  }
  if (s.counted > 0) {
    s.mae = sum / static_cast<double>(s.counted);
    s.rmse = std::sqrt(sq / static_cast<double>(s.counted));
  }
  return s;
}

// Longest run of consecutive truth points on labeled segments, as a
// half-open index range; nullopt when no point is labeled.
inline std::optional<std::pair<std::size_t, std::size_t>> labeled_subpath(const MatchedTrajectory& truth,
                                                                          const std::vector<bool>& labels) {
  std::optional<std::pair<std::size_t, std::size_t>> best;
  std::size_t i = 0;
  while (i < truth.size()) {
    if (!labels.at(truth.points[i].segment)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < truth.size() && labels.at(truth.points[j].segment)) ++j;
    if (!best || j - i > best->second - best->first) best = std::make_pair(i, j);
    i = j;
  }
  return best;
}

// Fraction of values strictly above k.
inline double sr_at_k(const std::vector<double>& subpath_f1, double k) {
  if (subpath_f1.empty()) return 0.0;
  std::size_t n = 0;
  for (double f : subpath_f1) n += f > k ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(subpath_f1.size());
}

struct PairResult {
  long long id = 0;
  Prf prf;
  double accuracy = 0.0;
  ErrorStats error;
  std::optional<double> subpath_f1;
};

inline const std::vector<double>& default_sr_thresholds() {
  static const std::vector<double> k{0.5, 0.6, 0.7, 0.8, 0.9};
  return k;
}

struct EvalReport {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  std::map<double, double> sr_at_k;
  std::size_t n_trajectories = 0;
  std::size_t n_unreachable_pairs = 0;
  std::size_t n_subpaths = 0;
  std::size_t n_without_subpath = 0;
  std::vector<PairResult> pairs;
};

inline PairResult evaluate_pair(const MatchedTrajectory& truth, const MatchedTrajectory& pred, Router& router,
                                const std::vector<bool>* labels = nullptr) {
  PairResult r;
  r.id = truth.id;
  const auto ts = segments_of(truth);
  const auto ps = segments_of(pred);
  r.prf = path_prf(ts, ps);
  r.accuracy = accuracy(ts, ps);
  r.error = mae_rmse(truth, pred, router);
  if (labels) {
    if (const auto range = labeled_subpath(truth, *labels)) {
      const std::vector<SegIndex> a(ts.begin() + static_cast<std::ptrdiff_t>(range->first),
                                    ts.begin() + static_cast<std::ptrdiff_t>(range->second));
      const std::vector<SegIndex> b(ps.begin() + static_cast<std::ptrdiff_t>(range->first),
                                    ps.begin() + static_cast<std::ptrdiff_t>(range->second));
      r.subpath_f1 = path_prf(a, b).f1;
    }
  }
  return r;
}

// Pairs are matched by trajectory id; a truth trajectory without a
// prediction is a contract error.
inline EvalReport evaluate(const std::vector<MatchedTrajectory>& truth, const std::vector<MatchedTrajectory>& pred,
                           const roadnet::RoadNetwork& net, const std::vector<bool>* labels = nullptr,
                           const std::vector<double>& thresholds = default_sr_thresholds()) {
  std::map<long long, const MatchedTrajectory*> by_id;
  for (const auto& p : pred) by_id[p.id] = &p;
  Router router(net);
  EvalReport rep;
  std::size_t err_counted = 0;
  std::vector<double> sub_f1;
  for (const auto& t : truth) {
    auto it = by_id.find(t.id);
    if (it == by_id.end()) throw ContractError("evaluate: no prediction for trajectory " + std::to_string(t.id));
    PairResult r = evaluate_pair(t, *it->second, router, labels);
    rep.recall += r.prf.recall;
    rep.precision += r.prf.precision;
    rep.f1 += r.prf.f1;
    rep.accuracy += r.accuracy;
    rep.n_unreachable_pairs += r.error.unreachable;
    if (r.error.counted > 0) {
      rep.mae += r.error.mae;
      rep.rmse += r.error.rmse;
      ++err_counted;
    }
    if (r.subpath_f1) sub_f1.push_back(*r.subpath_f1);
    else if (labels) ++rep.n_without_subpath;
    rep.pairs.push_back(std::move(r));
  }
  rep.n_trajectories = truth.size();
  if (rep.n_trajectories > 0) {
    const double n = static_cast<double>(rep.n_trajectories);
    rep.recall /= n;
    rep.precision /= n;
    rep.f1 /= n;
    rep.accuracy /= n;
  }
  if (err_counted > 0) {
    rep.mae /= static_cast<double>(err_counted);
    rep.rmse /= static_cast<double>(err_counted);
  }
  rep.n_subpaths = sub_f1.size();
  if (labels) {
    for (double k : thresholds) rep.sr_at_k[k] = sr_at_k(sub_f1, k);
  }
  return rep;
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string sr_key(double k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sr_at_%g", k);
  return buf;
}

// Human-readable "key: value" block.
inline std::string report_text(const EvalReport& r) {
  std::string s;
  auto line = [&](const std::string& k, const std::string& v) { s += k + ": " + v + "\n"; };
  line("trajectories", std::to_string(r.n_trajectories));
  line("recall", format_number(r.recall));
  line("precision", format_number(r.precision));
  line("f1", format_number(r.f1));
  line("accuracy", format_number(r.accuracy));
  line("mae_m", format_number(r.mae));
  line("rmse_m", format_number(r.rmse));
  line("unreachable_pairs", std::to_string(r.n_unreachable_pairs));
  if (!r.sr_at_k.empty()) {
    line("subpaths", std::to_string(r.n_subpaths));
    line("without_subpath", std::to_string(r.n_without_subpath));
    for (const auto& [k, v] : r.sr_at_k) line(sr_key(k), format_number(v));
  }
  return s;
}

// Machine-readable flat "key=value" lines.
inline std::string report_flat(const EvalReport& r) {
  std::string s;
  auto line = [&](const std::string& k, const std::string& v) { s += k + "=" + v + "\n"; };
  line("n_trajectories", std::to_string(r.n_trajectories));
  line("recall", format_number(r.recall));
  line("precision", format_number(r.precision));
  line("f1", format_number(r.f1));
  line("accuracy", format_number(r.accuracy));
  line("mae", format_number(r.mae));
  line("rmse", format_number(r.rmse));
  line("n_unreachable_pairs", std::to_string(r.n_unreachable_pairs));
  line("n_subpaths", std::to_string(r.n_subpaths));
  for (const auto& [k, v] : r.sr_at_k) line(sr_key(k), format_number(v));
  return s;
}

inline std::string report_csv(const EvalReport& r) {
  std::string s = "traj_id,recall,precision,f1,accuracy,mae,rmse,unreachable,subpath_f1\n";
  for (const auto& p : r.pairs) {
    s += std::to_string(p.id) + "," + format_number(p.prf.recall) + "," + format_number(p.prf.precision) + "," +
         format_number(p.prf.f1) + "," + format_number(p.accuracy) + "," + format_number(p.error.mae) + "," +
         format_number(p.error.rmse) + "," + std::to_string(p.error.unreachable) + "," +
         (p.subpath_f1 ? format_number(*p.subpath_f1) : std::string()) + "\n";
  }
  return s;
}

// Parses a flat report back into key/value pairs.
inline std::map<std::string, std::string> parse_flat_report(std::istream& is) {
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("report: expected key=value, got '" + line + "'");
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace rntraj::eval
