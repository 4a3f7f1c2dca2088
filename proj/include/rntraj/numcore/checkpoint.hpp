#pragma once

// Checkpoint archive: a key/value header followed by named arrays.
//
//   rntraj-checkpoint 1
//   header <count>
//   <key> <value>            (count lines)
//   arrays <count>
//   <name> <rows> <cols>     (per array)
//   <v0> <v1> ...            (hex-float values, one line)
//
// Values are written with %a so loading restores every bit.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rntraj/errors.hpp"
#include "rntraj/numcore/params.hpp"

namespace rntraj::nc {

using CheckpointHeader = std::map<std::string, std::string>;

inline std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hexfloat(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw FormatError("checkpoint: bad number '" + s + "'");
  return v;
}

inline void write_checkpoint(std::ostream& os, const CheckpointHeader& header, const ParamSet& params) {
  os << "rntraj-checkpoint 1\n";
  os << "header " << header.size() << "\n";
  for (const auto& [k, v] : header) {
    if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ContractError("checkpoint: header key/value contains whitespace: " + k);
    }
    os << k << " " << v << "\n";
  }
  os << "arrays " << params.entries().size() << "\n";
  for (const auto& e : params.entries()) {
    os << e.name << " " << e.tensor.rows() << " " << e.tensor.cols() << "\n";
    const auto& d = e.tensor.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (i) os << ' ';
      os << hexfloat(d[i]);
    }
    os << "\n";
  }
}

inline void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                            const ParamSet& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write checkpoint " + path);
  write_checkpoint(os, header, params);
  if (!os) throw FormatError("failed writing checkpoint " + path);
}

struct CheckpointData {
  CheckpointHeader header;
  std::vector<std::pair<std::string, Tensor>> arrays;
};

inline CheckpointData read_checkpoint(std::istream& is) {
  CheckpointData out;
  std::string magic, tag;
  int version = 0;
  if (!(is >> magic >> version) || magic != "rntraj-checkpoint" || version != 1) {
    throw FormatError("checkpoint: bad magic/version");
  }
  std::size_t n = 0;
  if (!(is >> tag >> n) || tag != "header") throw FormatError("checkpoint: missing header");
  std::string line;
  std::getline(is, line);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw FormatError("checkpoint: truncated header");
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw FormatError("checkpoint: bad header line '" + line + "'");
    out.header[line.substr(0, sp)] = line.substr(sp + 1);
  }
  if (!(is >> tag >> n) || tag != "arrays") throw FormatError("checkpoint: missing arrays");
  for (std::size_t i = 0; i < n; ++i) {
    std::string name;
    std::size_t r = 0, c = 0;
    if (!(is >> name >> r >> c)) throw FormatError("checkpoint: truncated array header");
    std::vector<double> v(r * c);
    std::string tok;
    for (double& x : v) {
      if (!(is >> tok)) throw FormatError("checkpoint: truncated array " + name);
      x = parse_hexfloat(tok);
    }
    out.arrays.emplace_back(name, Tensor({r, c}, std::move(v)));
  }
  return out;
}

inline CheckpointData load_checkpoint_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path);
  return read_checkpoint(is);
}

// Copies arrays into an already-built parameter set; names and shapes must
// match exactly.
inline void restore_params(const CheckpointData& ckpt, ParamSet& params) {
  if (ckpt.arrays.size() != params.entries().size()) {
    throw FormatError("checkpoint: array count " + std::to_string(ckpt.arrays.size()) +
                      " does not match model (" + std::to_string(params.entries().size()) + ")");
  }
  for (const auto& [name, t] : ckpt.arrays) {
    const auto* e = params.find(name);
    if (!e) throw FormatError("checkpoint: unknown array " + name);
    if (!(e->tensor.shape() == t.shape())) {
      throw FormatError("checkpoint: shape mismatch for " + name + ": " + to_string(t.shape()) +
                        " vs " + to_string(e->tensor.shape()));
    }
    Tensor dst = e->tensor;
    dst.data() = t.data();
  }
}

}  // namespace rntraj::nc
