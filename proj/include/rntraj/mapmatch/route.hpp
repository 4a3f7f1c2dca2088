#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rntraj/roadnet/network.hpp"

namespace rntraj::mapmatch {

using roadnet::RoadNetwork;
using roadnet::SegIndex;

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

// A position on the network: segment plus moving ratio.
struct Location {
  SegIndex segment = 0;
  double ratio = 0.0;
};

inline bool reachable(double d) { return d != kUnreachable; }

// Driving distances over the segment graph. Per-source Dijkstra results are
// cached; a Router is not safe for concurrent use.
class Router {
 public:
  explicit Router(const RoadNetwork& net) : net_(&net) {}

  // Shortest distance from the end of `from` to the start of `to`, where
  // every intermediate segment costs its full length. `from == to` means a
  // loop back to the segment start.
  double gap(SegIndex from, SegIndex to) {
    auto it = cache_.find(from);
    if (it == cache_.end()) it = cache_.emplace(from, dijkstra(from)).first;
    return it->second[to];
  }

  // Driving distance respecting edge direction; kUnreachable when no path.
  double distance(Location from, Location to) {
    const auto& sa = net_->segment(from.segment);
    if (from.segment == to.segment && to.ratio >= from.ratio) {
      return (to.ratio - from.ratio) * sa.length;
    }
    const double g = gap(from.segment, to.segment);
    if (!reachable(g)) return kUnreachable;
    return (1.0 - from.ratio) * sa.length + g + to.ratio * net_->segment(to.segment).length;
  }

  // Segment sequence of a shortest path from the end of `from` to the start
  // of `to` (exclusive of both); empty when directly connected. Returns
  // false when unreachable.
  bool path_between(SegIndex from, SegIndex to, std::vector<SegIndex>& out) {
    out.clear();
    const auto [dist, prev] = dijkstra_with_parents(from);
    if (!reachable(dist[to])) return false;
    for (SegIndex cur = to; prev[cur] != kNone;) {
      cur = prev[cur];
      out.push_back(cur);
    }
    std::reverse(out.begin(), out.end());
    return true;
  }

  const RoadNetwork& network() const { return *net_; }

 private:
  static constexpr SegIndex kNone = std::numeric_limits<SegIndex>::max();

  std::pair<std::vector<double>, std::vector<SegIndex>> dijkstra_with_parents(SegIndex src) const {
    const std::size_t n = net_->size();
    std::vector<double> dist(n, kUnreachable);
    std::vector<SegIndex> prev(n, kNone);
    using Item = std::pair<double, SegIndex>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    for (SegIndex j : net_->successors(src)) {
      if (dist[j] > 0.0) {
        dist[j] = 0.0;
        pq.emplace(0.0, j);
      }
    }
    while (!pq.empty()) {
      const auto [d, j] = pq.top();
      pq.pop();
      if (d > dist[j]) continue;
      const double nd = d + net_->segment(j).length;
      for (SegIndex k : net_->successors(j)) {
        if (nd < dist[k]) {
          dist[k] = nd;
          prev[k] = j;
          pq.emplace(nd, k);
        }
      }
    }
    return {std::move(dist), std::move(prev)};
  }

  std::vector<double> dijkstra(SegIndex src) const { return dijkstra_with_parents(src).first; }

  const RoadNetwork* net_;
  std::unordered_map<SegIndex, std::vector<double>> cache_;
};

inline double shortest_path_distance(const RoadNetwork& net, Location from, Location to) {
  Router r(net);
  return r.distance(from, to);
}

}  // namespace rntraj::mapmatch
