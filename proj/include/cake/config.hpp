#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cake/model.hpp"

namespace cake {

// Flat key = value config with named sections:
//
//   [profile longalpaca-7b]
//   n_layers = 32
//   hidden_size = 4096
//   precision_bytes = 2
//
//   [trace ssd]
//   mbps = 10000            # or: file = traces/dyn.csv, or: points = 0:2000, 500:1000
//
// '#' starts a comment; section headers are "[kind]" or "[kind name]".
struct ConfigSection {
  std::string kind;
  std::string name;
  std::vector<std::pair<std::string, std::string>> values;

  bool has(std::string_view key) const;
  std::string get(std::string_view key) const;  // throws if missing
  std::string get_or(std::string_view key, std::string_view fallback) const;
  std::uint64_t get_u64(std::string_view key) const;
  std::uint64_t get_u64_or(std::string_view key, std::uint64_t fallback) const;
  double get_double(std::string_view key) const;
  double get_double_or(std::string_view key, double fallback) const;
  std::vector<std::string> get_list(std::string_view key) const;  // comma separated
};

struct ConfigFile {
  std::vector<ConfigSection> sections;
  std::filesystem::path dir;  // base for relative paths inside the config

  static ConfigFile load(const std::filesystem::path& path);
  static ConfigFile parse(std::string_view text, std::filesystem::path dir = {});

  const ConfigSection* find(std::string_view kind, std::string_view name) const;
  const ConfigSection& require(std::string_view kind, std::string_view name) const;
  std::vector<const ConfigSection*> all(std::string_view kind) const;
};

ModelProfile profile_from_section(const ConfigSection& section);
CostModel cost_model_from_section(const ConfigSection& section);
BandwidthTrace trace_from_section(const ConfigSection& section, const std::filesystem::path& base_dir);

// Two-column CSV (time_ms, mbps); a non-numeric first line is treated as a
// header and skipped.
BandwidthTrace load_trace_csv(const std::filesystem::path& path);

}  // namespace cake
