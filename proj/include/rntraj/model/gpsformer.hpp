#pragma once

// Trajectory encoder: N blocks of (transformer encoder layer over the point
// sequence, graph refinement layer over the per-point sub-graphs), with a
// graph readout feeding the next block.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <tuple>
#include <utility>
#include <string>
#include <vector>

#include "rntraj/model/config.hpp"
#include "rntraj/model/layers.hpp"
#include "rntraj/model/subgraph.hpp"

namespace rntraj::model {

// Environmental context width: 24 one-hot hours plus a holiday flag.
inline constexpr std::size_t kEnvWidth = 25;

// Hour of day and weekend flag of a Unix timestamp, in UTC.
inline std::array<double, kEnvWidth> env_context(double unix_time) {
  std::array<double, kEnvWidth> f{};
  const auto secs = static_cast<std::int64_t>(std::floor(unix_time));
  const std::int64_t day = secs >= 0 ? secs / 86400 : (secs - 86399) / 86400;
  const std::int64_t in_day = secs - day * 86400;
  f[static_cast<std::size_t>(in_day / 3600)] = 1.0;
  // 1970-01-01 was a Thursday, so day % 7 of 2 and 3 are Saturday and Sunday.
  const std::int64_t dow = ((day % 7) + 7) % 7;
  f[24] = (dow == 2 || dow == 3) ? 1.0 : 0.0;
  return f;
}

// Sinusoidal position table, rows x d: sin on even columns, cos on odd ones.
inline Tensor positional_table(std::size_t rows, std::size_t d) {
  Tensor pe = Tensor::zeros(rows, d);
  for (std::size_t pos = 0; pos < rows; ++pos) {
    for (std::size_t c = 0; c < d; ++c) {
      const double freq = std::pow(10000.0, static_cast<double>(c - c % 2) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) / freq;
      pe.data()[pos * d + c] = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

// Adds the position table to a (batch*length) x d sequence block, where the
// position of row r is r % length.
inline Tensor positional_encode(const Tensor& h, std::size_t length) {
  if (length == 0 || h.rows() % length != 0) throw DimensionError("positional_encode: rows not a multiple of length");
  const Tensor pe = positional_table(length, h.cols());
  std::vector<double> tiled;
  tiled.reserve(h.size());
  for (std::size_t b = 0; b < h.rows() / length; ++b) tiled.insert(tiled.end(), pe.data().begin(), pe.data().end());
  return nc::add(h, Tensor(h.shape(), std::move(tiled)));
}

// All ordered (query, key) pairs within each trajectory of a flat
// (batch*length)-row sequence block.
inline EdgeList sequence_edges(std::size_t batch, std::size_t length) {
  EdgeList e;
  e.nodes = batch * length;
  for (std::size_t t = 0; t < batch; ++t)
    for (std::size_t i = 0; i < length; ++i)
      for (std::size_t j = 0; j < length; ++j) {
        e.dst.push_back(t * length + i);
        e.src.push_back(t * length + j);
      }
  return e;
}

// LayerNorm(x + MultiHead(x)) followed by LayerNorm(x + FFN(x)).
struct TransformerLayer {
  Linear query, key, value, output;
  LayerNorm norm1, norm2;
  FeedForward ffn;
  std::size_t heads = 1;
  Tensor head_sum;
  Tensor head_expand;
  double scale = 1.0;

  static TransformerLayer make(ParamSet& ps, const std::string& name, std::size_t d, std::size_t heads,
                               std::size_t ffn_hidden, std::mt19937_64& rng) {
    if (heads == 0 || d % heads != 0) throw ContractError("transformer: heads must divide d");
    TransformerLayer t;
    t.query = Linear::make(ps, name + ".Wq", d, d, rng, false);
    t.key = Linear::make(ps, name + ".Wk", d, d, rng, false);
    t.value = Linear::make(ps, name + ".Wv", d, d, rng, false);
    t.output = Linear::make(ps, name + ".Wo", d, d, rng, false);
    t.norm1 = LayerNorm::make(ps, name + ".ln1", d);
    t.norm2 = LayerNorm::make(ps, name + ".ln2", d);
    t.ffn = FeedForward::make(ps, name + ".ffn", d, ffn_hidden, d, rng);
    t.heads = heads;
    t.head_sum = head_block_matrix(d, heads);
    t.head_expand = nc::transpose(t.head_sum).detach();
    t.scale = 1.0 / std::sqrt(static_cast<double>(d));
    return t;
  }

  // Attention weights per (query, key) edge and head, edges x heads; rows
  // sharing a query sum to one within every head.
  Tensor attention(const Tensor& x, const EdgeList& edges, OpStats* stats = nullptr) const {
    Tensor q = nc::gather_rows(query(x), edges.dst);
    Tensor k = nc::gather_rows(key(x), edges.src);
    Tensor s = nc::scale(nc::matmul(nc::mul(q, k), head_sum), scale);
    if (stats) stats->attention_scores += edges.size() * heads;
    return nc::segment_softmax(s, edges.dst, edges.nodes);
  }

  Tensor multi_head(const Tensor& x, const EdgeList& edges, OpStats* stats = nullptr) const {
    Tensor alpha = attention(x, edges, stats);
    Tensor msg = nc::mul(nc::gather_rows(value(x), edges.src), nc::matmul(alpha, head_expand));
    return output(nc::scatter_add_rows(msg, edges.dst, edges.nodes));
  }

  Tensor operator()(const Tensor& x, const EdgeList& edges, OpStats* stats = nullptr) const {
    Tensor h = norm1(nc::add(x, multi_head(x, edges, stats)));
    return norm2(nc::add(h, ffn(h)));
  }
};

// Graph normalization over a batch of sub-graphs.
//   mu    = mean of the per-graph node means
//   sigma = mean over all nodes of (z - mu)^2
//   out   = gain * (z - mu) / sqrt(sigma + eps) + shift
// Training uses batch statistics and updates the running buffers; inference
// uses the running buffers.
struct GraphNorm {
  Tensor gain;
  Tensor shift;
  Tensor running_mean;
  Tensor running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  static GraphNorm make(ParamSet& ps, const std::string& name, std::size_t d) {
    GraphNorm g;
    g.gain = ps.add_constant(name + ".gain", 1, d, 1.0);
    g.shift = ps.add_constant(name + ".shift", 1, d, 0.0);
    g.running_mean = ps.add_buffer(name + ".running_mean", 1, d, 0.0);
    g.running_var = ps.add_buffer(name + ".running_var", 1, d, 1.0);
    return g;
  }

  // Batch statistics (mu, sigma), each 1 x d.
  static std::pair<Tensor, Tensor> statistics(const Tensor& z, const Index& node_graph, std::size_t graphs) {
    Tensor mu = nc::mean(nc::segment_mean_rows(z, node_graph, graphs), 0);
    Tensor sigma = nc::mean(nc::square(nc::sub(z, mu)), 0);
    return {mu, sigma};
  }

  // (z - mu) / sqrt(sigma + eps) before the gain and shift.
  Tensor normalize(const Tensor& z, const Index& node_graph, std::size_t graphs, bool training) const {
    Tensor mu, sigma;
    if (training) {
      std::tie(mu, sigma) = statistics(z, node_graph, graphs);
      update_running(mu, sigma);
    } else {
      mu = running_mean.detach();
      sigma = running_var.detach();
    }
    return nc::div(nc::sub(z, mu), nc::sqrt(nc::add_scalar(sigma, eps)));
  }

  Tensor operator()(const Tensor& z, const Index& node_graph, std::size_t graphs, bool training) const {
    return nc::add(nc::mul(normalize(z, node_graph, graphs, training), gain), shift);
  }

 private:
  void update_running(const Tensor& mu, const Tensor& sigma) const {
    Tensor rm = running_mean;
    Tensor rv = running_var;
    for (std::size_t c = 0; c < mu.cols(); ++c) {
      rm.data()[c] = (1.0 - momentum) * rm.data()[c] + momentum * mu.data()[c];
      rv.data()[c] = (1.0 - momentum) * rv.data()[c] + momentum * sigma.data()[c];
    }
  }
};

// z = sigmoid(tr W1 + Z W2 + b), out = z * tr + (1 - z) * Z, with tr
// repeated over the nodes of its sub-graph.
struct GatedFusion {
  Linear from_seq;    // W_z,1, no bias
  Linear from_graph;  // W_z,2 and b_z

  static GatedFusion make(ParamSet& ps, const std::string& name, std::size_t d, std::mt19937_64& rng) {
    return {Linear::make(ps, name + ".Wz1", d, d, rng, false), Linear::make(ps, name + ".Wz2", d, d, rng)};
  }

  Tensor operator()(const Tensor& tr_nodes, const Tensor& z) const {
    Tensor gate = nc::sigmoid(nc::add(from_seq(tr_nodes), from_graph(z)));
    return nc::add(nc::mul(gate, tr_nodes), nc::mul(nc::one_minus(gate), z));
  }
};

// Graph refinement layer:
//   Z <- Norm(Z + Fuse(tr, Z))
//   Z <- Norm(Z + Forward(Z))
class GraphRefinement {
 public:
  GraphRefinement() = default;

  GraphRefinement(ParamSet& ps, const std::string& name, const ModelConfig& cfg, std::mt19937_64& rng)
      : ablation_(cfg.ablation) {
    const std::size_t d = cfg.d;
    if (ablation_.no_gf) {
      concat_ffn_ = FeedForward::make(ps, name + ".fuse_ffn", 2 * d, cfg.ffn_mult * d, d, rng);
    } else {
      fusion_ = GatedFusion::make(ps, name + ".fuse", d, rng);
    }
    if (ablation_.no_gat) {
      node_ffn_ = FeedForward::make(ps, name + ".forward_ffn", d, cfg.ffn_mult * d, d, rng);
    } else {
      for (std::size_t p = 0; p < cfg.P; ++p) {
        gat_.push_back(GatLayer::make(ps, name + ".gat" + std::to_string(p), d, cfg.heads, rng));
      }
    }
    if (ablation_.no_gn) {
      ln1_ = LayerNorm::make(ps, name + ".ln1", d);
      ln2_ = LayerNorm::make(ps, name + ".ln2", d);
    } else {
      gn1_ = GraphNorm::make(ps, name + ".gn1", d);
      gn2_ = GraphNorm::make(ps, name + ".gn2", d);
    }
  }

  Tensor fuse(const Tensor& tr, const Tensor& z, const BatchGraph& bg) const {
    Tensor tr_nodes = nc::gather_rows(tr, bg.node_graph);
    if (ablation_.no_gf) return concat_ffn_(nc::concat({tr_nodes, z}, 1));
    return fusion_(tr_nodes, z);
  }

  Tensor forward_graph(const Tensor& z, const BatchGraph& bg, OpStats* stats) const {
    if (ablation_.no_gat) return node_ffn_(z);
    Tensor out = z;
    for (const auto& layer : gat_) out = layer(out, bg.edges, stats);
    return out;
  }

  Tensor operator()(const Tensor& tr, const Tensor& z, const BatchGraph& bg, bool training,
                    OpStats* stats = nullptr) const {
    Tensor x = norm(0, nc::add(z, fuse(tr, z, bg)), bg, training);
    return norm(1, nc::add(x, forward_graph(x, bg, stats)), bg, training);
  }

 private:
  Tensor norm(int which, const Tensor& z, const BatchGraph& bg, bool training) const {
    if (ablation_.no_gn) return which == 0 ? ln1_(z) : ln2_(z);
    return (which == 0 ? gn1_ : gn2_)(z, bg.node_graph, bg.graphs(), training);
  }

  Ablation ablation_;
  GatedFusion fusion_;
  FeedForward concat_ffn_;
  std::vector<GatLayer> gat_;
  FeedForward node_ffn_;
  GraphNorm gn1_, gn2_;
  LayerNorm ln1_, ln2_;
};

struct EncoderOutput {
  Tensor h;       // (batch*length) x d, H after the last block
  Tensor h_traj;  // batch x d
  Tensor z;       // nodes x d, sub-graph node features after the last block
};

class GpsFormer {
 public:
  GpsFormer() = default;

  GpsFormer(ParamSet& ps, const ModelConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    const std::size_t d = cfg.d;
    input_proj_ = Linear::make(ps, "gpsformer.input_proj", d + kPointFeatureWidth, d, rng);
    for (std::size_t l = 0; l < cfg.N; ++l) {
      const std::string name = "gpsformer.block" + std::to_string(l);
      transformer_.push_back(TransformerLayer::make(ps, name + ".tr", d, cfg.heads, cfg.ffn_mult * d, rng));
      if (!cfg.ablation.no_grl) grl_.emplace_back(ps, name + ".grl", cfg, rng);
    }
    traj_proj_ = Linear::make(ps, "gpsformer.traj_proj", d + kEnvWidth, d, rng);
  }

  // Initial node features: the X_road rows of every sub-graph node.
  static Tensor initial_nodes(const Tensor& xroad, const BatchGraph& bg) {
    return nc::gather_rows(xroad, bg.node_segment);
  }

  // Influence-weighted pooling of node features per graph, graphs x d.
  static Tensor pooled_points(const Tensor& z0, const BatchGraph& bg) {
    std::vector<double> w(bg.nodes());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = bg.node_weight[k] / bg.graph_weight_sum[bg.node_graph[k]];
    const std::size_t n = w.size();
    return nc::scatter_add_rows(nc::mul(z0, Tensor({n, 1}, std::move(w))), bg.node_graph, bg.graphs());
  }

  // Ĥ0 before the position encoding: Linear([pooled || point features]).
  Tensor initial_sequence(const Tensor& z0, const BatchGraph& bg) const {
    return input_proj_(nc::concat({pooled_points(z0, bg), bg.point_features}, 1));
  }

  // env: batch x 25 environmental contexts.
  EncoderOutput encode(const BatchGraph& bg, const Tensor& xroad, const Tensor& env, bool training,
                       OpStats* stats = nullptr) const {
    if (env.rows() != bg.batch || env.cols() != kEnvWidth) throw DimensionError("encode: env must be batch x 25");
    const EdgeList seq = sequence_edges(bg.batch, bg.length);
    Tensor z = initial_nodes(xroad, bg);
    Tensor h = positional_encode(initial_sequence(z, bg), bg.length);
    for (std::size_t l = 0; l < transformer_.size(); ++l) {
      Tensor tr = transformer_[l](h, seq, stats);
      if (cfg_.ablation.no_grl) {
        h = tr;
        continue;
      }
      z = grl_[l](tr, z, bg, training, stats);
      h = nc::segment_mean_rows(z, bg.node_graph, bg.graphs());
    }
    Tensor mean_h = nc::segment_mean_rows(h, bg.graph_traj, bg.batch);
    return {h, traj_proj_(nc::concat({mean_h, env}, 1)), z};
  }

  const std::vector<TransformerLayer>& transformer_layers() const { return transformer_; }
  const std::vector<GraphRefinement>& refinement_layers() const { return grl_; }

 private:
  ModelConfig cfg_;
  Linear input_proj_;
  std::vector<TransformerLayer> transformer_;
  std::vector<GraphRefinement> grl_;
  Linear traj_proj_;
};

}  // namespace rntraj::model
