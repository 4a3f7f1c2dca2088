#pragma once

// Building blocks shared by the road-network encoder, GPSFormer and decoder:
// affine maps, layer norm, the gated recurrent cell, feed-forward and
// multi-head graph attention.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rntraj/numcore/ops.hpp"
#include "rntraj/numcore/params.hpp"

namespace rntraj::model {

using nc::Index;
using nc::ParamSet;
using nc::Tensor;

// Counts attention scores evaluated during a forward pass.
struct OpStats {
  std::size_t attention_scores = 0;
};

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out, undefined when the map has no bias

  static Linear make(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out,
                     std::mt19937_64& rng, bool with_bias = true) {
    Linear l;
    l.weight = ps.add_uniform(name + ".weight", in, out, in, rng);
    if (with_bias) l.bias = ps.add_uniform(name + ".bias", 1, out, in, rng);
    return l;
  }

  Tensor operator()(const Tensor& x) const {
    Tensor y = nc::matmul(x, weight);
    return bias.defined() ? nc::add(y, bias) : y;
  }
};

struct LayerNorm {
  Tensor gain;
  Tensor shift;
  double eps = 1e-5;

  static LayerNorm make(ParamSet& ps, const std::string& name, std::size_t d) {
    return {ps.add_constant(name + ".gain", 1, d, 1.0), ps.add_constant(name + ".shift", 1, d, 0.0)};
  }

  Tensor operator()(const Tensor& x) const {
    Tensor centered = nc::sub(x, nc::mean(x, 1));
    Tensor var = nc::mean(nc::square(centered), 1);
    Tensor normed = nc::div(centered, nc::sqrt(nc::add_scalar(var, eps)));
    return nc::add(nc::mul(normed, gain), shift);
  }
};

// Gated recurrent cell over rows: every row of `state`/`input` is an
// independent sequence element.
//   z = sigmoid([s, x] Wz + bz)
//   r = sigmoid([s, x] Wr + br)
//   c = tanh([r * s, x] Wc + bc)
//   s' = (1 - z) * s + z * c
struct GruCell {
  Linear update;
  Linear reset;
  Linear candidate;

  static GruCell make(ParamSet& ps, const std::string& name, std::size_t hidden, std::size_t in,
                      std::mt19937_64& rng) {
    return {Linear::make(ps, name + ".z", hidden + in, hidden, rng),
            Linear::make(ps, name + ".r", hidden + in, hidden, rng),
            Linear::make(ps, name + ".c", hidden + in, hidden, rng)};
  }

  Tensor operator()(const Tensor& state, const Tensor& input) const {
    Tensor sx = nc::concat({state, input}, 1);
    Tensor z = nc::sigmoid(update(sx));
    Tensor r = nc::sigmoid(reset(sx));
    Tensor c = nc::tanh(candidate(nc::concat({nc::mul(r, state), input}, 1)));
    return nc::add(nc::mul(nc::one_minus(z), state), nc::mul(z, c));
  }
};

// Position-wise ReLU network: ReLU(x W1 + b1) W2 + b2.
struct FeedForward {
  Linear inner;
  Linear outer;

  static FeedForward make(ParamSet& ps, const std::string& name, std::size_t in, std::size_t hidden,
                          std::size_t out, std::mt19937_64& rng) {
    return {Linear::make(ps, name + ".inner", in, hidden, rng),
            Linear::make(ps, name + ".outer", hidden, out, rng)};
  }

  Tensor operator()(const Tensor& x) const { return outer(nc::relu(inner(x))); }
};

// Directed message edges src -> dst over `nodes` nodes.
struct EdgeList {
  std::size_t nodes = 0;
  Index dst;
  Index src;

  std::size_t size() const { return dst.size(); }
};

// Message edges over a directed graph: each node attends to its in- and
// out-neighbours and to itself.
inline EdgeList neighbourhood_edges(std::size_t nodes, const std::vector<std::pair<std::size_t, std::size_t>>& directed) {
  std::vector<std::vector<std::size_t>> nb(nodes);
  for (std::size_t i = 0; i < nodes; ++i) nb[i].push_back(i);
  for (const auto& [a, b] : directed) {
    nb[a].push_back(b);
    nb[b].push_back(a);
  }
  EdgeList e;
  e.nodes = nodes;
  for (std::size_t i = 0; i < nodes; ++i) {
    std::sort(nb[i].begin(), nb[i].end());
    nb[i].erase(std::unique(nb[i].begin(), nb[i].end()), nb[i].end());
    for (std::size_t j : nb[i]) {
      e.dst.push_back(i);
      e.src.push_back(j);
    }
  }
  return e;
}

// Constant d x h matrix with ones where column block k of width d/h belongs
// to head k. X * B sums each head's slice of a row.
inline Tensor head_block_matrix(std::size_t d, std::size_t heads) {
  const std::size_t w = d / heads;
  Tensor b = Tensor::zeros(d, heads);
  for (std::size_t c = 0; c < d; ++c) b.data()[c * heads + c / w] = 1.0;
  return b;
}

// Multi-head graph attention.
//   score_ij,k = LeakyReLU(a_k . [What_k x_i || What_k x_j])
//   alpha_ij,k = softmax over j in N(i)
//   out_i = ||_k LeakyReLU(sum_j alpha_ij,k W_k x_j)
// Head k owns columns [k*d/h, (k+1)*d/h) of W and What.
struct GatLayer {
  Tensor value_proj;   // W, d x d
  Tensor score_proj;   // What, d x d
  Tensor attn_dst;     // left half of every a_k, laid out 1 x d
  Tensor attn_src;     // right half, 1 x d
  std::size_t heads = 1;
  Tensor head_sum;     // constant d x h
  Tensor head_expand;  // constant h x d

  static GatLayer make(ParamSet& ps, const std::string& name, std::size_t d, std::size_t heads,
                       std::mt19937_64& rng) {
    if (heads == 0 || d % heads != 0) {
      throw ContractError("GAT: head count " + std::to_string(heads) + " must divide d=" +
                          std::to_string(d));
    }
    GatLayer g;
    g.value_proj = ps.add_uniform(name + ".W", d, d, d, rng);
    g.score_proj = ps.add_uniform(name + ".What", d, d, d, rng);
    g.attn_dst = ps.add_uniform(name + ".a_dst", 1, d, 2 * d / heads, rng);
    g.attn_src = ps.add_uniform(name + ".a_src", 1, d, 2 * d / heads, rng);
    g.heads = heads;
    g.head_sum = head_block_matrix(d, heads);
    g.head_expand = nc::transpose(g.head_sum).detach();
    return g;
  }

  // Attention coefficients, edges x heads.
  Tensor attention(const Tensor& x, const EdgeList& edges, OpStats* stats = nullptr) const {
    Tensor hx = nc::matmul(x, score_proj);
    Tensor sd = nc::matmul(nc::mul(hx, attn_dst), head_sum);  // nodes x h
    Tensor ss = nc::matmul(nc::mul(hx, attn_src), head_sum);
    Tensor e = nc::leaky_relu(nc::add(nc::gather_rows(sd, edges.dst), nc::gather_rows(ss, edges.src)));
    if (stats) stats->attention_scores += edges.size() * heads;
    return nc::segment_softmax(e, edges.dst, edges.nodes);
  }

  Tensor operator()(const Tensor& x, const EdgeList& edges, OpStats* stats = nullptr) const {
    Tensor alpha = attention(x, edges, stats);
    Tensor msg = nc::gather_rows(nc::matmul(x, value_proj), edges.src);
    msg = nc::mul(msg, nc::matmul(alpha, head_expand));
    return nc::leaky_relu(nc::scatter_add_rows(msg, edges.dst, edges.nodes));
  }
};

}  // namespace rntraj::model
