#include "cake/claim.hpp"

#include <stdexcept>

namespace cake {

const char* to_string(Side side) { return side == Side::compute ? "compute" : "io"; }

ClaimTable::ClaimTable(std::uint32_t n_chunks)
    : records_(n_chunks), n_(n_chunks), io_next_(static_cast<std::int64_t>(n_chunks) - 1) {
  if (n_chunks == 0) throw std::invalid_argument("claim table: need at least one chunk");
}

bool ClaimTable::claim(Side side, std::uint32_t index, Micros now_us) {
  std::lock_guard lock(mu_);
  std::int64_t expected = side == Side::compute ? static_cast<std::int64_t>(compute_next_) : io_next_;
  if (static_cast<std::int64_t>(index) != expected)
    throw std::logic_error("claim: side attempted non-adjacent index");
  if (records_[index]) return false;
  records_[index] = ClaimRecord{side, now_us};
  if (side == Side::compute)
    ++compute_next_;
  else
    --io_next_;
  return true;
}

std::optional<std::uint32_t> ClaimTable::next_index(Side side) const {
  std::lock_guard lock(mu_);
  if (static_cast<std::int64_t>(compute_next_) > io_next_) return std::nullopt;
  return side == Side::compute ? compute_next_ : static_cast<std::uint32_t>(io_next_);
}

bool ClaimTable::all_claimed() const {
  std::lock_guard lock(mu_);
  return static_cast<std::int64_t>(compute_next_) > io_next_;
}

std::optional<ClaimRecord> ClaimTable::record(std::uint32_t index) const {
  std::lock_guard lock(mu_);
  return records_.at(index);
}

std::uint32_t ClaimTable::merge_point() const {
  std::lock_guard lock(mu_);
  return static_cast<std::uint32_t>(io_next_ + 1);
}

}  // namespace cake
