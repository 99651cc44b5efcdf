#pragma once

#include <cmath>
#include <cstdint>

namespace cake {

// All timeline arithmetic runs on integer microseconds so virtual-clock
// event math stays exact. Wall-clock code converts at the boundary.
using Micros = std::int64_t;

inline Micros ms_to_us(double ms) { return static_cast<Micros>(std::llround(ms * 1000.0)); }

inline double us_to_ms(Micros us) { return static_cast<double>(us) / 1000.0; }

}  // namespace cake
