#pragma once

#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>

#include "rntraj/errors.hpp"

namespace rntraj::model {

// Variants that swap one component for a simpler one.
struct Ablation {
  bool no_grl = false;  // plain transformer blocks, no sub-graph refinement
  bool no_gf = false;   // concatenation + feed-forward instead of gated fusion
  bool no_gn = false;   // layer norm instead of graph norm
  bool no_gat = false;  // feed-forward instead of graph attention in the refinement layer
  bool no_gcl = false;  // drop the graph classification loss

  bool any() const { return no_grl || no_gf || no_gn || no_gat || no_gcl; }

  std::string to_string() const {
    std::string s;
    auto add = [&](bool on, const char* name) {
      if (!on) return;
      if (!s.empty()) s += ',';
      s += name;
    };
    add(no_grl, "grl");
    add(no_gf, "gf");
    add(no_gn, "gn");
    add(no_gat, "gat");
    add(no_gcl, "gcl");
    return s.empty() ? "none" : s;
  }

  // Comma-separated list of grl|gf|gn|gat|gcl, or "none".
  static Ablation parse(const std::string& text) {
    Ablation a;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty() || tok == "none") continue;
      if (tok == "grl") a.no_grl = true;
      else if (tok == "gf") a.no_gf = true;
      else if (tok == "gn") a.no_gn = true;
      else if (tok == "gat") a.no_gat = true;
      else if (tok == "gcl") a.no_gcl = true;
      else throw ConfigError("unknown ablation '" + tok + "' (expected grl|gf|gn|gat|gcl)");
    }
    return a;
  }
};

struct ModelConfig {
  std::size_t d = 64;        // hidden width
  std::size_t M = 2;         // GAT layers in the road-network encoder
  std::size_t N = 2;         // GPSFormer blocks
  std::size_t P = 1;         // GAT layers inside each graph refinement layer
  std::size_t heads = 8;
  std::size_t ffn_mult = 2;  // feed-forward hidden width = ffn_mult * d
  double delta = 400.0;      // sub-graph radius, meters
  double gamma = 30.0;       // sub-graph influence scale, meters
  double beta = 15.0;        // constraint-mask influence scale, meters
  double max_gps_error = 100.0;
  double interval = 10.0;    // target sample interval, seconds
  bool mask_at_inference = true;
  Ablation ablation;
  std::uint64_t seed = 42;

  void validate() const {
    if (d == 0 || heads == 0 || d % heads != 0) {
      throw ConfigError("hidden width d=" + std::to_string(d) + " must be a positive multiple of heads=" +
                        std::to_string(heads));
    }
    if (N == 0) throw ConfigError("N must be at least 1");
    if (!(delta > 0 && gamma > 0 && beta > 0 && max_gps_error > 0 && interval > 0)) {
      throw ConfigError("delta, gamma, beta, max_gps_error and interval must be positive");
    }
  }
};

}  // namespace rntraj::model
