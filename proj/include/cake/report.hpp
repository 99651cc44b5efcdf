#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "cake/claim.hpp"
#include "cake/time.hpp"

namespace cake {

enum class RunMode { cake, compute_only, io_only };

const char* to_string(RunMode mode);
RunMode parse_run_mode(std::string_view s);

struct ChunkRecord {
  std::uint32_t index = 0;
  Side side = Side::compute;
  Micros start_us = 0;
  Micros finish_us = 0;
  std::uint64_t bytes = 0;  // encoded bytes moved for io rows, 0 for compute rows
};

struct RunReport {
  RunMode mode = RunMode::cake;
  std::uint32_t n_chunks = 0;
  Micros ttft_us = 0;
  std::uint32_t merge_point = 0;
  double computed_fraction = 0.0;
  Micros compute_busy_us = 0;
  Micros io_busy_us = 0;
  std::vector<ChunkRecord> chunks;  // ascending index, one per chunk
  std::vector<std::string> events;  // human-readable timeline
};

// Request arrival is t=0; TTFT is the instant the last chunk is available.
Micros ttft(const RunReport& report);

// Event log: header "index,side,start_us,finish_us,bytes" then one row per
// chunk in index order.
void write_event_csv(const RunReport& report, std::ostream& out);
std::string event_csv(const RunReport& report);

// "mode,n_chunks,ttft_us,merge_point,computed_fraction"
std::string summary_line(const RunReport& report);

}  // namespace cake
