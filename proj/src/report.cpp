#include "cake/report.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace cake {

const char* to_string(RunMode mode) {
  switch (mode) {
    case RunMode::cake:
      return "cake";
    case RunMode::compute_only:
      return "compute_only";
    case RunMode::io_only:
      return "io_only";
  }
  throw std::logic_error("bad run mode");
}

RunMode parse_run_mode(std::string_view s) {
  if (s == "cake") return RunMode::cake;
  if (s == "compute_only") return RunMode::compute_only;
  if (s == "io_only") return RunMode::io_only;
  throw std::invalid_argument("unknown run mode '" + std::string(s) + "'");
}

Micros ttft(const RunReport& report) { return report.ttft_us; }

void write_event_csv(const RunReport& report, std::ostream& out) {
  out << "index,side,start_us,finish_us,bytes\n";
  for (const auto& rec : report.chunks) {
    out << rec.index << ',' << to_string(rec.side) << ',' << rec.start_us << ',' << rec.finish_us
        << ',' << rec.bytes << '\n';
  }
}

std::string event_csv(const RunReport& report) {
  std::ostringstream out;
  write_event_csv(report, out);
  return out.str();
}

std::string summary_line(const RunReport& report) {
  char frac[32];
  std::snprintf(frac, sizeof(frac), "%.6f", report.computed_fraction);
  std::ostringstream out;
  out << to_string(report.mode) << ',' << report.n_chunks << ',' << report.ttft_us << ','
      << report.merge_point << ',' << frac;
  return out.str();
}

}  // namespace cake
