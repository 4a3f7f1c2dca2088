#pragma once

// Training objectives. Every loss is a per-trajectory mean averaged over the
// trajectories of a batch. Supervision that falls outside the model's
// support is skipped and counted, never clamped.

#include <cmath>
#include <cstddef>
#include <vector>

#include "rntraj/model/rntrajrec.hpp"

namespace rntraj::train {

using model::Sample;
using nc::Index;
using nc::Tensor;

struct LossValue {
  Tensor value;              // 1 x 1; zero without history when nothing counted
  std::size_t counted = 0;   // trajectories contributing
  std::size_t skipped = 0;   // trajectories (or points, for loss_enc) skipped
};

// -mean_b (1/l) sum_j log P(target_j). A trajectory whose target has zero
// mask weight at any step is skipped.
inline LossValue loss_id(const std::vector<Tensor>& log_probs, const std::vector<const Sample*>& batch) {
  LossValue out;
  const std::size_t steps = log_probs.size();
  std::vector<bool> use(batch.size(), true);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->target.size() != steps) throw ContractError("loss_id: target length does not match the decoder");
    for (std::size_t j = 0; j < steps && use[i]; ++j) {
      const double lp = log_probs[j](i, batch[i]->target[j].segment);
      if (!std::isfinite(lp)) use[i] = false;
    }
    use[i] ? ++out.counted : ++out.skipped;
  }
  if (out.counted == 0 || steps == 0) {
    out.value = Tensor::scalar(0.0);
    return out;
  }
  const double w = -1.0 / (static_cast<double>(out.counted) * static_cast<double>(steps));
  std::vector<Tensor> terms;
  for (std::size_t j = 0; j < steps; ++j) {
    Index rows, cols;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (!use[i]) continue;
      rows.push_back(i);
      cols.push_back(batch[i]->target[j].segment);
    }
    terms.push_back(nc::pick(log_probs[j], rows, cols));
  }
  out.value = nc::scale(nc::sum_all(nc::concat(terms, 0)), w);
  return out;
}

// mean_b (1/l) sum_j (r_j - target_j)^2.
inline LossValue loss_rate(const std::vector<Tensor>& rates, const std::vector<const Sample*>& batch) {
  LossValue out;
  const std::size_t steps = rates.size();
  if (steps == 0) {
    out.value = Tensor::scalar(0.0);
    return out;
  }
  std::vector<Tensor> diffs;
  for (std::size_t j = 0; j < steps; ++j) {
    std::vector<double> t(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (batch[i]->target.size() != steps) throw ContractError("loss_rate: target length does not match the decoder");
      t[i] = batch[i]->target[j].ratio;
    }
    diffs.push_back(nc::square(nc::sub(rates[j], Tensor({batch.size(), 1}, std::move(t)))));
  }
  out.counted = batch.size();
  out.value = nc::scale(nc::sum_all(nc::concat(diffs, 0)),
                        1.0 / (static_cast<double>(batch.size()) * static_cast<double>(steps)));
  return out;
}

// Graph classification on the encoder's node features: within each
// sub-graph, P(node k) = w_k exp(z_k . c) / sum_n w_n exp(z_n . c). The loss
// is -log P(true segment of the input point), averaged per trajectory then
// over the batch. Points whose truth is unknown or absent from the
// sub-graph are skipped.
inline LossValue loss_enc(const Tensor& z, const model::BatchGraph& bg, const Tensor& classifier,
                          const std::vector<const Sample*>& batch) {
  LossValue out;
  std::vector<double> log_w(bg.nodes());
  for (std::size_t k = 0; k < log_w.size(); ++k) log_w[k] = std::log(bg.node_weight[k]);
  Index rows;
  std::vector<double> coef;
  std::vector<std::size_t> per_traj(batch.size(), 0);
  std::vector<std::size_t> pick_traj;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    if (batch[t]->input_truth.size() != bg.length) throw ContractError("loss_enc: input truth length mismatch");
    for (std::size_t i = 0; i < bg.length; ++i) {
      const long long truth = batch[t]->input_truth[i];
      const std::size_t g = t * bg.length + i;
      const std::size_t end = g + 1 < bg.graphs() ? bg.graph_offset[g + 1] : bg.nodes();
      std::size_t found = end;
      for (std::size_t k = bg.graph_offset[g]; k < end && truth >= 0; ++k) {
        if (bg.node_segment[k] == static_cast<std::size_t>(truth)) {
          found = k;
          break;
        }
      }
      if (found == end) {
        ++out.skipped;
        continue;
      }
      rows.push_back(found);
      pick_traj.push_back(t);
      ++per_traj[t];
    }
  }
  std::size_t traj_counted = 0;
  for (std::size_t c : per_traj) traj_counted += c > 0 ? 1 : 0;
  out.counted = traj_counted;
  if (rows.empty()) {
    out.value = Tensor::scalar(0.0);
    return out;
  }
  for (std::size_t t : pick_traj) {
    coef.push_back(-1.0 / (static_cast<double>(traj_counted) * static_cast<double>(per_traj[t])));
  }
  Tensor logits = nc::add(nc::matmul(z, classifier), Tensor({bg.nodes(), 1}, std::move(log_w)));
  Tensor lp = nc::segment_log_softmax(logits, bg.node_graph, bg.graphs());
  Tensor picked = nc::gather_rows(lp, rows);
  out.value = nc::sum_all(nc::mul(picked, Tensor({rows.size(), 1}, std::move(coef))));
  return out;
}

struct LossWeights {
  double lambda1 = 10.0;
  double lambda2 = 0.1;

  void validate() const {
    if (!(std::isfinite(lambda1) && std::isfinite(lambda2) && lambda1 >= 0 && lambda2 >= 0)) {
      throw ConfigError("loss weights must be finite and non-negative");
    }
  }
};

struct LossBreakdown {
  Tensor total;
  LossValue id;
  LossValue rate;
  LossValue enc;
  bool enc_active = false;
};

// L_id + lambda1 L_rate + lambda2 L_enc. The graph classification term is
// dropped when lambda2 is 0 or the sub-graph refinement is ablated.
inline LossBreakdown total_loss(const model::RnTrajRec& m, const model::ForwardResult& fr,
                                const std::vector<const Sample*>& batch, const LossWeights& w) {
  LossBreakdown b;
  b.id = loss_id(fr.decoder.log_probs, batch);
  b.rate = loss_rate(fr.decoder.rates, batch);
  b.total = nc::add(b.id.value, nc::scale(b.rate.value, w.lambda1));
  const auto& ab = m.config().ablation;
  b.enc_active = w.lambda2 > 0 && !ab.no_gcl && !ab.no_grl;
  if (b.enc_active) {
    b.enc = loss_enc(fr.encoder.z, fr.graph, m.classifier(), batch);
    b.total = nc::add(b.total, nc::scale(b.enc.value, w.lambda2));
  } else {
    b.enc.value = Tensor::scalar(0.0);
  }
  return b;
}

}  // namespace rntraj::train
