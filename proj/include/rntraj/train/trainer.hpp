#pragma once

// Adam training loop with per-epoch validation and best-by-accuracy
// parameter retention.

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "rntraj/eval/metrics.hpp"
#include "rntraj/numcore/adam.hpp"
#include "rntraj/train/dataset.hpp"
#include "rntraj/train/losses.hpp"

namespace rntraj::train {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double clip_norm = 5.0;
  LossWeights weights;
  std::uint64_t seed = 42;

  void validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr > 0)) throw ConfigError("lr must be positive");
    if (!(clip_norm > 0)) throw ConfigError("clip_norm must be positive");
    weights.validate();
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss_id = 0.0;
  double loss_rate = 0.0;
  double loss_enc = 0.0;
  double val_acc = 0.0;
  double val_f1 = 0.0;
  std::size_t skipped_id = 0;
  std::size_t skipped_enc = 0;
};

inline std::string format_epoch(const EpochLog& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu %.6f %.6f %.6f %.6f %.6f", e.epoch, e.loss_id, e.loss_rate, e.loss_enc,
                e.val_acc, e.val_f1);
  return buf;
}

struct Accuracy {
  double accuracy = 0.0;
  double f1 = 0.0;
};

// Mean positionwise accuracy and path F1 of free-running recovery.
inline Accuracy score(const model::RnTrajRec& m, const std::vector<model::Sample>& samples, std::size_t batch_size) {
  Accuracy a;
  if (samples.empty()) return a;
  for (const auto& idx : make_batches(samples, batch_size, nullptr)) {
    const auto batch = gather(samples, idx);
    const auto pred = m.recover(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      std::vector<roadnet::SegIndex> truth, got;
      for (const auto& p : batch[i]->target) truth.push_back(p.segment);
      for (const auto& p : pred[i].points) got.push_back(p.segment);
      a.accuracy += eval::accuracy(truth, got);
      a.f1 += eval::path_prf(truth, got).f1;
    }
  }
  a.accuracy /= static_cast<double>(samples.size());
  a.f1 /= static_cast<double>(samples.size());
  return a;
}

struct TrainResult {
  std::vector<EpochLog> history;
  std::size_t best_epoch = 0;
  double best_val_acc = -1.0;
};

// Trains in place. Validation uses `val`, or the training samples when
// `val` is empty. After the last epoch the parameters of the best
// validation epoch (earliest on ties) are restored. Each epoch line is
// written to `log` when given; `on_epoch` runs after every epoch.
inline TrainResult train_model(model::RnTrajRec& m, const std::vector<model::Sample>& train_set,
                               const std::vector<model::Sample>& val, const TrainConfig& cfg,
                               std::ostream* log = nullptr,
                               const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  for (const auto& s : train_set) {
    if (s.target.empty()) throw ContractError("training sample " + std::to_string(s.id) + " has no target");
  }
  std::mt19937_64 rng(cfg.seed);
  nc::AdamState adam;
  adam.lr = cfg.lr;
  std::vector<Tensor> params = m.params().trainable();
  const auto& val_set = val.empty() ? train_set : val;

  TrainResult res;
  std::vector<std::vector<double>> best;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochLog e;
    e.epoch = epoch;
    const auto batches = make_batches(train_set, cfg.batch_size, &rng);
    for (const auto& idx : batches) {
      const auto batch = gather(train_set, idx);
      m.params().zero_grad();
      const auto fr = m.forward(batch, true, model::DecodeMode::teacher_forced);
      const LossBreakdown lb = total_loss(m, fr, batch, cfg.weights);
      const double total = lb.total.item();
      if (!std::isfinite(total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
      }
      if (lb.total.requires_grad()) {
        lb.total.backward();
        nc::clip_grad_norm(params, cfg.clip_norm);
        nc::adam_step(params, adam);
      }
      e.loss_id += lb.id.value.item();
      e.loss_rate += lb.rate.value.item();
      e.loss_enc += lb.enc.value.item();
      e.skipped_id += lb.id.skipped;
      e.skipped_enc += lb.enc.skipped;
    }
    const double nb = static_cast<double>(batches.size());
    e.loss_id /= nb;
    e.loss_rate /= nb;
    e.loss_enc /= nb;
    const Accuracy acc = score(m, val_set, cfg.batch_size);
    e.val_acc = acc.accuracy;
    e.val_f1 = acc.f1;
    if (e.val_acc > res.best_val_acc) {
      res.best_val_acc = e.val_acc;
      res.best_epoch = epoch;
      best.clear();
      for (const auto& entry : m.params().entries()) best.push_back(entry.tensor.data());
    }
    res.history.push_back(e);
    if (log) *log << format_epoch(e) << '\n';
    if (on_epoch) on_epoch(e);
  }
  auto& entries = m.params().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor t = entries[i].tensor;
    t.data() = best[i];
  }
  return res;
}

}  // namespace rntraj::train
