#pragma once

// Per-GPS-point weighted sub-graphs and the structural inputs of the
// trajectory encoder.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "rntraj/errors.hpp"
#include "rntraj/model/layers.hpp"
#include "rntraj/roadnet/network.hpp"
#include "rntraj/traj/trajectory.hpp"

namespace rntraj::model {

using roadnet::RoadNetwork;
using roadnet::SegIndex;

// Influence of a segment at distance `dist` from a point: exp(-dist^2/gamma^2).
inline double influence(double dist, double gamma) {
  if (!(gamma > 0)) throw ContractError("influence: gamma must be positive");
  return std::exp(-dist * dist / (gamma * gamma));
}

struct SubGraph {
  std::vector<SegIndex> nodes;
  // Directed edges between local node positions, inherited from the network.
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

// Induced sub-graph with every inherited edge (a, b) such that
// (nodes[a], nodes[b]) is a network edge.
inline SubGraph induced_subgraph(const RoadNetwork& net, std::vector<SegIndex> nodes) {
  SubGraph g;
  g.nodes = std::move(nodes);
  std::vector<long long> local(net.size(), -1);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) local[g.nodes[i]] = static_cast<long long>(i);
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    for (SegIndex s : net.successors(g.nodes[i]))
      if (local[s] >= 0) g.edges.emplace_back(i, static_cast<std::size_t>(local[s]));
  return g;
}

// Segments within delta of p, their induced edges and influence weights.
// When nothing lies within delta the radius is doubled, up to 4 * delta.
inline SubGraph gen_subgraph(const RoadNetwork& net, geo::LatLon p, double delta, double gamma) {
  if (!(delta > 0)) throw ContractError("gen_subgraph: delta must be positive");
  std::vector<SegIndex> nodes;
  for (double r = delta; r <= 4.0 * delta * (1 + 1e-12); r *= 2.0) {
    nodes = net.radius_query(p, r);
    if (!nodes.empty()) break;
  }
  if (nodes.empty()) {
    throw UnmatchedPointError(0, "no road segment within " + std::to_string(4.0 * delta) + " m (off-network point)");
  }
  SubGraph g = induced_subgraph(net, std::move(nodes));
  for (SegIndex s : g.nodes) {
    g.weights.push_back(influence(roadnet::point_to_segment_distance(p, net.segment(s)).distance, gamma));
  }
  return g;
}

// Weighted mean of node embeddings: sum_e w_e x_e / sum_e w_e.
inline Tensor pool_point(const SubGraph& g, const Tensor& xroad) {
  double total = 0.0;
  for (double w : g.weights) {
    if (!(w > 0)) throw ContractError("pool_point: weights must be positive");
    total += w;
  }
  Tensor rows = nc::gather_rows(xroad, g.nodes);
  std::vector<double> scaled(g.weights);
  for (double& w : scaled) w /= total;
  return nc::sum(nc::mul(rows, Tensor({g.size(), 1}, std::move(scaled))), 0);
}

// Number of per-point scalar features appended to the pooled embedding:
// normalized time, normalized grid x, normalized grid y.
inline constexpr std::size_t kPointFeatureWidth = 3;

// Structural part of the encoder input for one low-sample trajectory; the
// learned projection is applied later by the encoder.
struct EncoderInput {
  std::vector<SubGraph> graphs;
  std::vector<std::array<double, kPointFeatureWidth>> point_features;

  std::size_t size() const { return graphs.size(); }
};

inline EncoderInput build_encoder_input(const RoadNetwork& net, const std::vector<traj::GpsPoint>& points,
                                        double delta, double gamma) {
  if (points.empty()) throw ContractError("build_encoder_input: empty trajectory");
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (!(points[i].t > points[i - 1].t)) {
      throw ContractError("build_encoder_input: timestamps must be strictly increasing (index " +
                          std::to_string(i) + ")");
    }
  }
  EncoderInput in;
  const double t0 = points.front().t;
  const double span = points.back().t - t0;
  const auto& grid = net.grid();
  for (std::size_t i = 0; i < points.size(); ++i) {
    try {
      in.graphs.push_back(gen_subgraph(net, points[i].pos, delta, gamma));
    } catch (const UnmatchedPointError& e) {
      throw UnmatchedPointError(i, "point " + std::to_string(i) + ": " + e.what());
    }
    const roadnet::GridCell c = grid.clamped_cell_of(points[i].pos);
    in.point_features.push_back({span > 0 ? (points[i].t - t0) / span : 0.0,
                                 static_cast<double>(c.x) / grid.m,
                                 static_cast<double>(c.y) / grid.n});
  }
  return in;
}

// A batch of encoder inputs flattened into one node population.
struct BatchGraph {
  std::size_t batch = 0;     // trajectories
  std::size_t length = 0;    // points per trajectory
  Index node_segment;        // segment of every node
  Index node_graph;          // graph (= traj * length + point) of every node
  std::vector<double> node_weight;
  std::vector<double> graph_weight_sum;
  std::vector<std::size_t> graph_offset;  // first node of each graph
  EdgeList edges;            // within-graph neighbourhoods incl. self loops
  Tensor point_features;     // (batch*length) x 3
  Index graph_traj;          // trajectory of every graph

  std::size_t graphs() const { return batch * length; }
  std::size_t nodes() const { return node_segment.size(); }
};

inline BatchGraph make_batch_graph(const std::vector<const EncoderInput*>& inputs) {
  BatchGraph bg;
  if (inputs.empty()) throw ContractError("empty batch");
  bg.batch = inputs.size();
  bg.length = inputs[0]->size();
  std::vector<double> feats;
  std::vector<std::pair<std::size_t, std::size_t>> directed;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (inputs[t]->size() != bg.length) {
      throw ContractError("batch mixes trajectory lengths " + std::to_string(bg.length) + " and " +
                          std::to_string(inputs[t]->size()));
    }
    for (std::size_t i = 0; i < bg.length; ++i) {
      const SubGraph& g = inputs[t]->graphs[i];
      const std::size_t gid = t * bg.length + i;
      const std::size_t base = bg.node_segment.size();
      bg.graph_offset.push_back(base);
      bg.graph_traj.push_back(t);
      double wsum = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) {
        bg.node_segment.push_back(g.nodes[k]);
        bg.node_graph.push_back(gid);
        bg.node_weight.push_back(g.weights[k]);
        wsum += g.weights[k];
      }
      bg.graph_weight_sum.push_back(wsum);
      for (const auto& [a, b] : g.edges) directed.emplace_back(base + a, base + b);
      for (double f : inputs[t]->point_features[i]) feats.push_back(f);
    }
  }
  bg.edges = neighbourhood_edges(bg.node_segment.size(), directed);
  bg.point_features = Tensor({bg.graphs(), kPointFeatureWidth}, std::move(feats));
  return bg;
}

}  // namespace rntraj::model
