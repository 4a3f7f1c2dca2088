#pragma once

// Attention GRU decoder with the constraint mask layer. Each step predicts a
// distribution over segments and a moving ratio for one target timestamp.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rntraj/model/config.hpp"
#include "rntraj/model/layers.hpp"
#include "rntraj/roadnet/network.hpp"
#include "rntraj/traj/trajectory.hpp"

namespace rntraj::model {

using roadnet::RoadNetwork;
using roadnet::SegIndex;

// Per-target-timestamp weights over segments, rows x |V|, row-major.
struct ConstraintMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<bool> observed;
  std::vector<std::string> warnings;

  std::span<const double> row(std::size_t j) const { return {values.data() + j * cols, cols}; }

  static ConstraintMask ones(std::size_t rows, std::size_t cols) {
    return {rows, cols, std::vector<double>(rows * cols, 1.0), std::vector<bool>(rows, false), {}};
  }
};

// Observed target rows get exp(-dist^2/beta^2) for segments within
// max_gps_error of the observation and 0 elsewhere; unobserved rows are all
// ones. An observation with no segment in range falls back to a row of ones
// and records a warning.
inline ConstraintMask build_constraint_mask(const RoadNetwork& net, const std::vector<traj::GpsPoint>& input,
                                            const std::vector<double>& target_times, double beta,
                                            double max_gps_error) {
  if (!(beta > 0 && max_gps_error > 0)) throw ContractError("constraint mask: beta and max_gps_error must be positive");
  ConstraintMask m = ConstraintMask::ones(target_times.size(), net.size());
  std::size_t j = 0;
  for (std::size_t k = 0; k < input.size(); ++k) {
    const double t = input[k].t;
    while (j < target_times.size() && target_times[j] < t - 1e-6) ++j;
    if (j == target_times.size() || std::abs(target_times[j] - t) > 1e-6) {
      throw ContractError("constraint mask: input timestamp " + std::to_string(t) +
                          " is not a target timestamp");
    }
    m.observed[j] = true;
    const auto near = net.radius_query(input[k].pos, max_gps_error);
    if (near.empty()) {
      m.warnings.push_back("point " + std::to_string(k) + ": no segment within " +
                           std::to_string(max_gps_error) + " m, row left unconstrained");
      continue;
    }
    double* row = m.values.data() + j * m.cols;
    std::fill(row, row + m.cols, 0.0);
    for (SegIndex s : near) {
      const double d = roadnet::point_to_segment_distance(input[k].pos, net.segment(s)).distance;
      row[s] = std::exp(-d * d / (beta * beta));
    }
    ++j;
  }
  return m;
}

struct StepOutput {
  Tensor log_probs;  // batch x |V|, -inf off the mask support
  Tensor rate;       // batch x 1
  Tensor hidden;     // batch x d
  std::vector<SegIndex> argmax;
};

struct DecoderOutput {
  std::vector<Tensor> log_probs;  // one batch x |V| tensor per step
  std::vector<Tensor> rates;      // one batch x 1 tensor per step
  std::vector<std::vector<SegIndex>> segments;  // batch x steps
  std::vector<std::vector<double>> ratios;      // batch x steps
};

enum class DecodeMode { teacher_forced, free_running };

class Decoder {
 public:
  Decoder() = default;

  Decoder(ParamSet& ps, std::size_t segments, const ModelConfig& cfg, std::mt19937_64& rng)
      : segments_(segments), d_(cfg.d) {
    const std::size_t d = cfg.d;
    attn_v_ = ps.add_uniform("decoder.attn_v", d, 1, d, rng);
    attn_wg_ = Linear::make(ps, "decoder.attn_Wg", d, d, rng, false);
    attn_wh_ = Linear::make(ps, "decoder.attn_Wh", d, d, rng, false);
    gru_ = GruCell::make(ps, "decoder.gru", d, 2 * d + 1, rng);
    id_head_ = ps.add_uniform("decoder.w_id", d, segments, d, rng);
    rate_head_ = ps.add_uniform("decoder.w_rate", 2 * d, 1, 2 * d, rng);
    start_ = ps.add_uniform("decoder.start", 1, d, d, rng);
  }

  // Projection W_h H of the encoder sequence, reused by every step.
  Tensor project_context(const Tensor& h) const { return attn_wh_(h); }

  // a_t = sum_i alpha_i h_i with alpha = softmax_i(v . tanh(W_g s_t + W_h h_i))
  // within each trajectory; hidden is batch x d, h is (batch*length) x d.
  Tensor attend(const Tensor& hidden, const Tensor& h, const Tensor& h_proj, const Index& row_traj) const {
    Tensor pre = nc::tanh(nc::add(h_proj, nc::gather_rows(attn_wg_(hidden), row_traj)));
    Tensor alpha = nc::segment_softmax(nc::matmul(pre, attn_v_), row_traj, hidden.rows());
    return nc::scatter_add_rows(nc::mul(h, alpha), row_traj, hidden.rows());
  }

  // One decoder step from the previous segment embedding x and ratio r.
  // weights: batch x |V| constraint rows.
  StepOutput step(const Tensor& x, const Tensor& r, const Tensor& hidden, const Tensor& h, const Tensor& h_proj,
                  const Index& row_traj, std::span<const double> weights, const Tensor& xroad) const {
    Tensor a = attend(hidden, h, h_proj, row_traj);
    StepOutput out;
    out.hidden = gru_(hidden, nc::concat({x, r, a}, 1));
    out.log_probs = nc::masked_log_softmax_rows(nc::matmul(out.hidden, id_head_), weights);
    const std::size_t b = hidden.rows();
    out.argmax.resize(b);
    const auto& lp = out.log_probs.data();
    for (std::size_t i = 0; i < b; ++i) {
      std::size_t best = 0;
      for (std::size_t s = 1; s < segments_; ++s) {
        if (lp[i * segments_ + s] > lp[i * segments_ + best]) best = s;
      }
      out.argmax[i] = best;
    }
    Tensor x_pred = nc::gather_rows(xroad, out.argmax);
    out.rate = nc::sigmoid(nc::matmul(nc::concat({x_pred, out.hidden}, 1), rate_head_));
    return out;
  }

  // Runs all steps. Teacher forcing feeds the ground-truth (segment, ratio)
  // of the previous step; free running feeds the previous prediction. The
  // first step feeds the start token with ratio 0. masks[t] constrains
  // trajectory t; when `apply_mask` is false every row is all ones.
  DecoderOutput decode(const Tensor& xroad, const Tensor& h, const Index& row_traj, const Tensor& h_traj,
                       const std::vector<const ConstraintMask*>& masks, DecodeMode mode,
                       const std::vector<const std::vector<traj::MatchedPoint>*>* targets = nullptr,
                       bool apply_mask = true) const {
    const std::size_t b = h_traj.rows();
    if (masks.size() != b) throw ContractError("decode: one constraint mask per trajectory required");
    const std::size_t steps = masks.front()->rows;
    for (const auto* m : masks) {
      if (m->rows != steps || m->cols != segments_) {
        throw ContractError("decode: constraint mask shape " + std::to_string(m->rows) + "x" +
                            std::to_string(m->cols) + " does not match " + std::to_string(steps) + "x" +
                            std::to_string(segments_));
      }
    }
    if (mode == DecodeMode::teacher_forced) {
      if (!targets || targets->size() != b) throw ContractError("decode: teacher forcing requires targets");
      for (const auto* t : *targets) {
        if (t->size() != steps) throw ContractError("decode: target length does not match the mask");
      }
    }

    DecoderOutput out;
    out.segments.assign(b, std::vector<SegIndex>(steps));
    out.ratios.assign(b, std::vector<double>(steps));
    const Tensor h_proj = project_context(h);
    Tensor hidden = h_traj;
    Tensor x = nc::repeat_rows(start_, b);
    Tensor r = Tensor::zeros(b, 1);
    std::vector<double> weights(b * segments_, 1.0);
    for (std::size_t j = 0; j < steps; ++j) {
      if (apply_mask) {
        for (std::size_t i = 0; i < b; ++i) {
          const auto row = masks[i]->row(j);
          std::copy(row.begin(), row.end(), weights.begin() + static_cast<std::ptrdiff_t>(i * segments_));
        }
      }
      StepOutput so = step(x, r, hidden, h, h_proj, row_traj, weights, xroad);
      hidden = so.hidden;
      for (std::size_t i = 0; i < b; ++i) {
        out.segments[i][j] = so.argmax[i];
        out.ratios[i][j] = std::min(so.rate.data()[i], roadnet::kMaxRatio);
      }
      if (mode == DecodeMode::teacher_forced) {
        Index prev(b);
        std::vector<double> prev_r(b);
        for (std::size_t i = 0; i < b; ++i) {
          prev[i] = (*(*targets)[i])[j].segment;
          prev_r[i] = (*(*targets)[i])[j].ratio;
        }
        x = nc::gather_rows(xroad, prev);
        r = Tensor({b, 1}, std::move(prev_r));
      } else {
        x = nc::gather_rows(xroad, so.argmax);
        r = so.rate;
      }
      out.log_probs.push_back(so.log_probs);
      out.rates.push_back(so.rate);
    }
    return out;
  }

  const Tensor& start_token() const { return start_; }
  std::size_t segments() const { return segments_; }

 private:
  std::size_t segments_ = 0;
  std::size_t d_ = 0;
  Tensor attn_v_;
  Linear attn_wg_;
  Linear attn_wh_;
  GruCell gru_;
  Tensor id_head_;
  Tensor rate_head_;
  Tensor start_;
};

}  // namespace rntraj::model
