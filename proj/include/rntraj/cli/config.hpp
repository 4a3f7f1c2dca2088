#pragma once

// Flat "key = value" configuration files and per-run manifests.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rntraj/errors.hpp"
#include "rntraj/roadnet/io.hpp"

namespace rntraj::cli {

using KeyValues = std::map<std::string, std::string>;

// Blank lines and '#' comments are ignored; keys may not repeat.
inline KeyValues parse_key_values(std::istream& is, const std::string& name) {
  KeyValues out;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const std::string line = roadnet::io_detail::strip(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(name + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = roadnet::io_detail::strip(line.substr(0, eq));
    const std::string value = roadnet::io_detail::strip(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(name + ":" + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw ConfigError(name + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

inline KeyValues load_key_values(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  return parse_key_values(is, path);
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string file_checksum(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot read " + path + " for checksum");
  std::ostringstream ss;
  ss << is.rdbuf();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(ss.str())));
  return buf;
}

struct RunManifest {
  std::string command;
  KeyValues config;  // resolved option values
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  // "key=value" lines; checksums are computed when written.
  std::string render() const {
    std::string s = "command=" + command + "\n";
    for (const auto& [k, v] : config) s += "config." + k + "=" + v + "\n";
    for (const auto& p : inputs) s += "input." + p + "=" + file_checksum(p) + "\n";
    for (const auto& p : outputs) s += "output." + p + "=" + file_checksum(p) + "\n";
    return s;
  }

  void write(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write manifest " + path);
    os << render();
  }
};

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

// Verbosity from RNTRAJ_LOG (error|warn|info|debug); default info.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* v = std::getenv("RNTRAJ_LOG");
    if (!v) return LogLevel::info;
    const std::string s(v);
    if (s == "error") return LogLevel::error;
    if (s == "warn") return LogLevel::warn;
    if (s == "debug") return LogLevel::debug;
    return LogLevel::info;
  }();
  return level;
}

inline void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= log_level()) std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

}  // namespace rntraj::cli
