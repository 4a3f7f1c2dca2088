#pragma once

// Supervised examples and equal-length batching.

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rntraj/model/rntrajrec.hpp"
#include "rntraj/traj/trajectory.hpp"

namespace rntraj::train {

// A low-sample input, its dense target, and the true segment of every
// input point.
struct Example {
  traj::RawTrajectory low;
  traj::MatchedTrajectory target;
  std::vector<long long> input_truth;
};

// Downsamples each dense raw trajectory and pairs it with the ground truth
// of the same id. Raw and truth points must share timestamps.
inline std::vector<Example> make_examples(const std::vector<traj::MatchedTrajectory>& truth,
                                          const std::vector<traj::RawTrajectory>& raw, std::size_t stride,
                                          std::optional<std::uint64_t> jitter_seed = std::nullopt) {
  std::map<long long, const traj::MatchedTrajectory*> by_id;
  for (const auto& t : truth) by_id[t.id] = &t;
  std::vector<Example> out;
  for (const auto& r : raw) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) throw ContractError("trajectory " + std::to_string(r.id) + " has no ground truth");
    const auto& tr = *it->second;
    if (tr.size() != r.size()) {
      throw ContractError("trajectory " + std::to_string(r.id) + ": raw and truth lengths differ");
    }
    std::optional<std::uint64_t> js;
    if (jitter_seed) js = *jitter_seed ^ static_cast<std::uint64_t>(r.id);
    const traj::Downsampled ds = traj::downsample(r, stride, js);
    Example e;
    e.low = ds.trajectory;
    e.target = tr;
    for (std::size_t k : ds.kept) {
      if (std::abs(tr.points[k].t - r.points[k].t) > 1e-6) {
        throw ContractError("trajectory " + std::to_string(r.id) + ": raw and truth timestamps differ");
      }
      e.input_truth.push_back(static_cast<long long>(tr.points[k].segment));
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<model::Sample> prepare_samples(const roadnet::RoadNetwork& net, const model::ModelConfig& cfg,
                                                  const std::vector<Example>& examples) {
  std::vector<model::Sample> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(model::prepare_sample(net, cfg, e.low, &e.target, &e.input_truth));
  return out;
}

// Groups sample indices by (input length, output length) and cuts each
// group into batches of at most batch_size. With an rng, groups are
// shuffled before cutting and the batch order is shuffled.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<model::Sample>& samples,
                                                          std::size_t batch_size, std::mt19937_64* rng) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    buckets[{samples[i].input_length(), samples[i].output_length()}].push_back(i);
  }
  std::vector<std::vector<std::size_t>> out;
  for (auto& [key, idx] : buckets) {
    if (rng) std::shuffle(idx.begin(), idx.end(), *rng);
    for (std::size_t b = 0; b < idx.size(); b += batch_size) {
      out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(b),
                       idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), b + batch_size)));
    }
  }
  if (rng) std::shuffle(out.begin(), out.end(), *rng);
  return out;
}

inline std::vector<const model::Sample*> gather(const std::vector<model::Sample>& samples,
                                                const std::vector<std::size_t>& idx) {
  std::vector<const model::Sample*> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&samples[i]);
  return out;
}

}  // namespace rntraj::train
