#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rntraj/numcore/tensor.hpp"

namespace rntraj::nc {

// Uniform double in [0, 1) from the top 53 bits; identical on every platform
// for a given mt19937_64 seed (std::uniform_real_distribution is not).
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Box-Muller standard normal.
inline double normal01(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Ordered collection of named tensors. Trainable entries receive gradients;
// non-trainable entries are state buffers (running statistics) that still
// travel with checkpoints.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
  };

  // U(-1/sqrt(fan_in), +1/sqrt(fan_in)).
  Tensor add_uniform(const std::string& name, std::size_t rows, std::size_t cols,
                     std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(rows * cols);
    for (double& x : v) x = uniform(rng, -bound, bound);
    return push(name, Tensor({rows, cols}, std::move(v), true), true);
  }

  Tensor add_constant(const std::string& name, std::size_t rows, std::size_t cols, double value) {
    return push(name, Tensor::full(rows, cols, value, true), true);
  }

  Tensor add_buffer(const std::string& name, std::size_t rows, std::size_t cols, double value) {
    return push(name, Tensor::full(rows, cols, value, false), false);
  }

  const std::vector<Entry>& entries() const { return entries_; }

  std::vector<Tensor> trainable() const {
    std::vector<Tensor> out;
    for (const auto& e : entries_)
      if (e.trainable) out.push_back(e.tensor);
    return out;
  }

  const Entry* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }

  void zero_grad() {
    for (auto& e : entries_)
      if (e.trainable) e.tensor.zero_grad();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.tensor.size();
    return n;
  }

 private:
  Tensor push(const std::string& name, Tensor t, bool trainable) {
    if (find(name)) throw ContractError("duplicate parameter name " + name);
    entries_.push_back({name, t, trainable});
    return t;
  }

  std::vector<Entry> entries_;
};

}  // namespace rntraj::nc
