#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <vector>

#include "cake/time.hpp"

namespace cake {

enum class Side { compute, io };

const char* to_string(Side side);

struct ClaimRecord {
  Side side;
  Micros at_us;
};

// Linearizable per-chunk ownership. The compute pointer walks up from 0,
// the io pointer walks down from n-1; each side may only claim the chunk
// its own pointer designates, so the claimed set is always a prefix plus
// a suffix. Exactly one side wins any chunk, including the last one both
// race for.
class ClaimTable {
 public:
  explicit ClaimTable(std::uint32_t n_chunks);

  // True iff this side won the chunk; its pointer advances on a win. A
  // losing side has met the other's territory and must stop. Claiming an
  // index other than the side's current pointer is a programming error.
  bool claim(Side side, std::uint32_t index, Micros now_us);

  // The side's next chunk, or nullopt once the pointers have crossed.
  std::optional<std::uint32_t> next_index(Side side) const;

  bool all_claimed() const;
  std::uint32_t n_chunks() const { return n_; }

  std::optional<ClaimRecord> record(std::uint32_t index) const;

  // Lowest io-claimed index; n when io claimed nothing. Everything below
  // was computed, everything at or above was fetched.
  std::uint32_t merge_point() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::optional<ClaimRecord>> records_;
  std::uint32_t n_;
  std::uint32_t compute_next_ = 0;
  std::int64_t io_next_;
};

}  // namespace cake
