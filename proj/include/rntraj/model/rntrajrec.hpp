#pragma once

// The full recovery model: road-network encoder, trajectory encoder and
// decoder sharing one parameter set.

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rntraj/model/config.hpp"
#include "rntraj/model/decoder.hpp"
#include "rntraj/model/gpsformer.hpp"
#include "rntraj/model/gridgnn.hpp"
#include "rntraj/model/subgraph.hpp"
#include "rntraj/numcore/checkpoint.hpp"

namespace rntraj::model {

// Timestamps t0, t0 + eps, ... up to the last input timestamp.
inline std::vector<double> target_timestamps(const std::vector<traj::GpsPoint>& input, double eps) {
  if (input.empty()) throw ContractError("target_timestamps: empty trajectory");
  if (!(eps > 0)) throw ContractError("target_timestamps: interval must be positive");
  const double t0 = input.front().t;
  const auto steps = static_cast<std::size_t>(std::floor((input.back().t - t0) / eps + 1e-9));
  std::vector<double> out(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) out[k] = t0 + static_cast<double>(k) * eps;
  return out;
}

// One prepared trajectory: low-sample input, structural encoder input,
// constraint mask, and optional supervision.
struct Sample {
  long long id = 0;
  std::vector<traj::GpsPoint> input;
  EncoderInput encoder;
  std::array<double, kEnvWidth> env{};
  std::vector<double> target_times;
  ConstraintMask mask;
  std::vector<traj::MatchedPoint> target;  // empty when unsupervised
  std::vector<long long> input_truth;      // segment of every input point, -1 when unknown

  std::size_t input_length() const { return input.size(); }
  std::size_t output_length() const { return target_times.size(); }
};

inline Sample prepare_sample(const RoadNetwork& net, const ModelConfig& cfg, const traj::RawTrajectory& low,
                             const traj::MatchedTrajectory* target = nullptr,
                             const std::vector<long long>* input_truth = nullptr) {
  low.validate();
  Sample s;
  s.id = low.id;
  s.input = low.points;
  s.encoder = build_encoder_input(net, low.points, cfg.delta, cfg.gamma);
  s.env = env_context(low.points.front().t);
  s.target_times = target_timestamps(low.points, cfg.interval);
  s.mask = build_constraint_mask(net, low.points, s.target_times, cfg.beta, cfg.max_gps_error);
  if (target) {
    if (target->size() != s.target_times.size()) {
      throw ContractError("trajectory " + std::to_string(low.id) + ": target has " +
                          std::to_string(target->size()) + " points, expected " +
                          std::to_string(s.target_times.size()));
    }
    for (std::size_t j = 0; j < target->size(); ++j) {
      if (std::abs(target->points[j].t - s.target_times[j]) > 1e-6) {
        throw ContractError("trajectory " + std::to_string(low.id) + ": target timestamps do not match");
      }
    }
    s.target = target->points;
  }
  if (input_truth) {
    if (input_truth->size() != low.size()) throw ContractError("input truth length does not match the input");
    s.input_truth = *input_truth;
  } else {
    s.input_truth.assign(low.size(), -1);
  }
  return s;
}

struct ForwardResult {
  BatchGraph graph;
  Tensor xroad;
  EncoderOutput encoder;
  DecoderOutput decoder;
};

class RnTrajRec {
 public:
  RnTrajRec(const RoadNetwork& net, const ModelConfig& cfg) : net_(&net), cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    gnn_ = GridGnn(ps_, net, cfg_, rng);
    former_ = GpsFormer(ps_, cfg_, rng);
    decoder_ = Decoder(ps_, net.size(), cfg_, rng);
    enc_cls_ = ps_.add_uniform("encoder.cls_w", cfg_.d, 1, cfg_.d, rng);
  }

  // Encodes and decodes a batch of equal-length samples. Teacher forcing
  // requires targets on every sample.
  ForwardResult forward(const std::vector<const Sample*>& batch, bool training, DecodeMode mode,
                        OpStats* stats = nullptr) const {
    if (batch.empty()) throw ContractError("forward: empty batch");
    ForwardResult r;
    std::vector<const EncoderInput*> inputs;
    std::vector<const ConstraintMask*> masks;
    std::vector<const std::vector<traj::MatchedPoint>*> targets;
    std::vector<double> env;
    for (const Sample* s : batch) {
      inputs.push_back(&s->encoder);
      masks.push_back(&s->mask);
      targets.push_back(&s->target);
      env.insert(env.end(), s->env.begin(), s->env.end());
    }
    r.graph = make_batch_graph(inputs);
    r.xroad = gnn_.forward(stats);
    r.encoder = former_.encode(r.graph, r.xroad, Tensor({batch.size(), kEnvWidth}, std::move(env)), training, stats);
    const bool mask = training || cfg_.mask_at_inference;
    r.decoder = decoder_.decode(r.xroad, r.encoder.h, r.graph.graph_traj, r.encoder.h_traj, masks, mode,
                                mode == DecodeMode::teacher_forced ? &targets : nullptr, mask);
    return r;
  }

  // Free-running inference without gradient tracking.
  std::vector<traj::MatchedTrajectory> recover(const std::vector<const Sample*>& batch) const {
    nc::NoGradGuard guard;
    ForwardResult r = forward(batch, false, DecodeMode::free_running);
    std::vector<traj::MatchedTrajectory> out;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      traj::MatchedTrajectory mt;
      mt.id = batch[i]->id;
      mt.interval = cfg_.interval;
      for (std::size_t j = 0; j < batch[i]->output_length(); ++j) {
        mt.points.push_back({r.decoder.segments[i][j], r.decoder.ratios[i][j], batch[i]->target_times[j]});
      }
      out.push_back(std::move(mt));
    }
    return out;
  }

  nc::CheckpointHeader header() const {
    nc::CheckpointHeader h;
    h["d"] = std::to_string(cfg_.d);
    h["M"] = std::to_string(cfg_.M);
    h["N"] = std::to_string(cfg_.N);
    h["P"] = std::to_string(cfg_.P);
    h["heads"] = std::to_string(cfg_.heads);
    h["ffn_mult"] = std::to_string(cfg_.ffn_mult);
    h["delta"] = nc::hexfloat(cfg_.delta);
    h["gamma"] = nc::hexfloat(cfg_.gamma);
    h["beta"] = nc::hexfloat(cfg_.beta);
    h["max_gps_error"] = nc::hexfloat(cfg_.max_gps_error);
    h["interval"] = nc::hexfloat(cfg_.interval);
    h["mask_at_inference"] = cfg_.mask_at_inference ? "1" : "0";
    h["ablation"] = cfg_.ablation.to_string();
    h["seed"] = std::to_string(cfg_.seed);
    h["segments"] = std::to_string(net_->size());
    return h;
  }

  void save(const std::string& path, const nc::CheckpointHeader& extra = {}) const {
    nc::CheckpointHeader h = header();
    for (const auto& [k, v] : extra) h[k] = v;
    nc::save_checkpoint(path, h, ps_);
  }

  static ModelConfig config_from_header(const nc::CheckpointHeader& h) {
    auto get = [&](const std::string& k) -> const std::string& {
      auto it = h.find(k);
      if (it == h.end()) throw FormatError("checkpoint: header lacks '" + k + "'");
      return it->second;
    };
    auto size = [&](const std::string& k) {
      try {
        return static_cast<std::size_t>(std::stoull(get(k)));
      } catch (const std::logic_error&) {
        throw FormatError("checkpoint: bad integer for '" + k + "'");
      }
    };
    ModelConfig c;
    c.d = size("d");
    c.M = size("M");
    c.N = size("N");
    c.P = size("P");
    c.heads = size("heads");
    c.ffn_mult = size("ffn_mult");
    c.delta = nc::parse_hexfloat(get("delta"));
    c.gamma = nc::parse_hexfloat(get("gamma"));
    c.beta = nc::parse_hexfloat(get("beta"));
    c.max_gps_error = nc::parse_hexfloat(get("max_gps_error"));
    c.interval = nc::parse_hexfloat(get("interval"));
    c.mask_at_inference = get("mask_at_inference") == "1";
    c.ablation = Ablation::parse(get("ablation"));
    c.seed = size("seed");
    return c;
  }

  static RnTrajRec load(const std::string& path, const RoadNetwork& net) {
    const nc::CheckpointData data = nc::load_checkpoint_file(path);
    const ModelConfig cfg = config_from_header(data.header);
    auto it = data.header.find("segments");
    if (it == data.header.end() || it->second != std::to_string(net.size())) {
      throw FormatError("checkpoint was trained on a network of a different size");
    }
    RnTrajRec m(net, cfg);
    nc::restore_params(data, m.ps_);
    return m;
  }

  const ModelConfig& config() const { return cfg_; }
  const RoadNetwork& network() const { return *net_; }
  ParamSet& params() { return ps_; }
  const ParamSet& params() const { return ps_; }
  const GridGnn& gridgnn() const { return gnn_; }
  const GpsFormer& gpsformer() const { return former_; }
  const Decoder& decoder() const { return decoder_; }
  // Per-node scoring vector of the graph classification loss, d x 1.
  const Tensor& classifier() const { return enc_cls_; }

 private:
  const RoadNetwork* net_;
  ModelConfig cfg_;
  ParamSet ps_;
  GridGnn gnn_;
  GpsFormer former_;
  Decoder decoder_;
  Tensor enc_cls_;
};

}  // namespace rntraj::model
