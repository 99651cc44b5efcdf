#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cake/codec.hpp"
#include "cake/config.hpp"
#include "cake/model.hpp"
#include "cake/report.hpp"
#include "cake/scheduler.hpp"
#include "cake/store.hpp"

namespace cake {

// One experiment matrix: the cross product of every axis below is run
// exactly once, and rows are keyed by the full parameter tuple.
struct ExperimentConfig {
  std::vector<ModelProfile> profiles;
  std::string cost_model_name;
  CostModel cost_model;
  std::vector<std::uint64_t> context_lengths;
  std::uint32_t chunk_size = 512;
  std::vector<std::pair<std::string, BandwidthTrace>> traces;
  std::vector<double> power_fractions;
  std::vector<Codec> codecs;
  std::vector<RunMode> modes;
  ClockMode clock = ClockMode::sim;
  std::uint64_t seed = 0;
  std::filesystem::path store_root;
  PayloadKind payload_kind = PayloadKind::sparse;
  std::uint32_t token_budget = 512;
  std::uint64_t throttle_quantum_bytes = 1 << 20;
  double decode_us_per_byte = 0.0;

  static ExperimentConfig from_config(const ConfigFile& cfg);
  RunOptions run_options() const;
};

struct ResultRow {
  std::string profile;
  std::uint64_t context_tokens = 0;
  std::uint32_t chunk_size = 0;
  std::string trace_name;
  double power = 1.0;
  std::string codec_id;
  RunMode mode = RunMode::cake;
  ClockMode clock = ClockMode::sim;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  RunReport report;
};

// Stores are separated per (profile, codec): chunk keys are token-derived,
// so the same key maps to different payload bytes under different profiles
// or codecs.
std::filesystem::path store_dir_for(const std::filesystem::path& root, const ModelProfile& profile,
                                    const Codec& codec);

std::vector<ResultRow> run_matrix(const ExperimentConfig& cfg, bool parallel);

extern const char kResultsCsvVersion[];
void write_results_csv(std::span<const ResultRow> rows, std::ostream& out);

int cmd_populate(const ExperimentConfig& cfg, std::ostream& log);
int cmd_bench(const ExperimentConfig& cfg, const std::filesystem::path& out_csv, bool verbose,
              bool parallel, std::ostream& log);
int cmd_oracle(const ExperimentConfig& cfg, std::ostream& out);

struct OverheadStats {
  std::uint64_t samples = 0;
  std::int64_t p50_ns = 0;
  std::int64_t p99_ns = 0;
  std::int64_t max_ns = 0;
};

// Times the per-chunk scheduling decision (residency check + claim) in
// isolation, no sleeps and no I/O.
OverheadStats measure_overhead(std::uint32_t n_chunks, std::uint32_t rounds);
int cmd_overhead(std::ostream& out);

}  // namespace cake
