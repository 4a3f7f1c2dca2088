#pragma once

// Road-network representation: a GRU over the grid cells each segment
// crosses, fused with a per-segment embedding, refined by M graph-attention
// layers over the segment graph, then concatenated with static features
// and projected to d columns.

#include <algorithm>
#include <random>
#include <vector>

#include "rntraj/model/config.hpp"
#include "rntraj/model/layers.hpp"
#include "rntraj/roadnet/network.hpp"

namespace rntraj::model {

using roadnet::RoadNetwork;
using roadnet::SegIndex;

class GridGnn {
 public:
  GridGnn() = default;

  GridGnn(ParamSet& ps, const RoadNetwork& net, const ModelConfig& cfg, std::mt19937_64& rng) {
    const std::size_t d = cfg.d;
    segments_ = net.size();
    grid_table_ = ps.add_uniform("gridgnn.grid_table", net.grid().cell_count(), d, d, rng);
    road_table_ = ps.add_uniform("gridgnn.road_table", segments_, d, d, rng);
    gru_ = GruCell::make(ps, "gridgnn.gru", d, d, rng);
    for (std::size_t l = 0; l < cfg.M; ++l) {
      gat_.push_back(GatLayer::make(ps, "gridgnn.gat" + std::to_string(l), d, cfg.heads, rng));
    }
    out_proj_ = Linear::make(ps, "gridgnn.out_proj", d + roadnet::kStaticFeatureWidth, d, rng);

    std::size_t longest = 0;
    for (SegIndex i = 0; i < segments_; ++i) longest = std::max(longest, net.grid_cells(i).size());
    steps_.resize(longest);
    for (SegIndex i = 0; i < segments_; ++i) {
      const auto& cells = net.grid_cells(i);
      if (cells.empty()) throw ContractError("segment has an empty grid sequence");
      for (std::size_t j = 0; j < cells.size(); ++j) {
        steps_[j].active.push_back(i);
        steps_[j].cells.push_back(net.grid().flat(cells[j]));
      }
    }
    edges_ = neighbourhood_edges(segments_, net.edges());
    static_features_ = Tensor({segments_, roadnet::kStaticFeatureWidth}, net.static_features());
  }

  // Final GRU state over each segment's grid sequence, |V| x d.
  Tensor grid_states() const {
    Tensor state;
    for (std::size_t j = 0; j < steps_.size(); ++j) {
      const auto& st = steps_[j];
      Tensor g = nc::gather_rows(grid_table_, st.cells);
      if (j == 0) {
        // Every segment crosses at least one cell.
        state = gru_(Tensor::zeros(segments_, grid_table_.cols()), g);
        continue;
      }
      Tensor prev = nc::gather_rows(state, st.active);
      Tensor next = gru_(prev, g);
      state = nc::add(state, nc::scatter_add_rows(nc::sub(next, prev), st.active, segments_));
    }
    return state;
  }

  // r0 = ReLU(s_final + road embedding)
  Tensor segment_init() const { return nc::relu(nc::add(grid_states(), road_table_)); }

  // X_road, |V| x d.
  Tensor forward(OpStats* stats = nullptr) const {
    Tensor r = segment_init();
    for (const auto& layer : gat_) r = layer(r, edges_, stats);
    return out_proj_(nc::concat({r, static_features_}, 1));
  }

  const EdgeList& edges() const { return edges_; }
  const std::vector<GatLayer>& gat_layers() const { return gat_; }
  const GruCell& gru() const { return gru_; }
  const Tensor& grid_table() const { return grid_table_; }
  const Tensor& road_table() const { return road_table_; }

 private:
  struct Step {
    Index active;  // segments whose sequence has a j-th cell
    Index cells;   // flat cell index for each active segment
  };

  std::size_t segments_ = 0;
  Tensor grid_table_;
  Tensor road_table_;
  GruCell gru_;
  std::vector<GatLayer> gat_;
  Linear out_proj_;
  std::vector<Step> steps_;
  EdgeList edges_;
  Tensor static_features_;
};

}  // namespace rntraj::model
