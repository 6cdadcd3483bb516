#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace dfs {

inline int64_t block_count_for(int64_t tokens, int64_t block_size) {
  if (block_size < 1) throw std::invalid_argument("block_size must be >= 1");
  return (tokens + block_size - 1) / block_size;
}

// M x M boolean block mask, row-major, bit-packed MSB-first within each
// byte. Bit (u, v) selects key block v for query block u.
class BlockMask {
 public:
  BlockMask() = default;
  BlockMask(int64_t block_count, int64_t block_size, bool selected = false)
      : block_count_(block_count),
        block_size_(block_size),
        bits_(static_cast<size_t>(byte_size(block_count)), selected ? 0xff : 0x00) {
    if (block_count < 1 || block_size < 1)
      throw std::invalid_argument("BlockMask: block_count and block_size must be >= 1");
    clear_trailing_bits();
  }

  static int64_t byte_size(int64_t block_count) {
    return (block_count * block_count + 7) / 8;
  }

  int64_t block_count() const { return block_count_; }
  int64_t block_size() const { return block_size_; }

  bool get(int64_t u, int64_t v) const {
    const int64_t idx = u * block_count_ + v;
    return (bits_[static_cast<size_t>(idx >> 3)] >> (7 - (idx & 7))) & 1;
  }

  void set(int64_t u, int64_t v, bool value) {
    const int64_t idx = u * block_count_ + v;
    const uint8_t mask = static_cast<uint8_t>(1u << (7 - (idx & 7)));
    if (value)
      bits_[static_cast<size_t>(idx >> 3)] |= mask;
    else
      bits_[static_cast<size_t>(idx >> 3)] &= static_cast<uint8_t>(~mask);
  }

  int64_t selected_count() const {
    int64_t count = 0;
    for (int64_t u = 0; u < block_count_; ++u)
      for (int64_t v = 0; v < block_count_; ++v)
        if (get(u, v)) ++count;
    return count;
  }

  bool row_empty(int64_t u) const {
    for (int64_t v = 0; v < block_count_; ++v)
      if (get(u, v)) return false;
    return true;
  }

  std::span<const uint8_t> bytes() const { return bits_; }
  std::span<uint8_t> bytes() { return bits_; }

  friend bool operator==(const BlockMask&, const BlockMask&) = default;

 private:
  // bits beyond M*M stay zero so byte payloads compare and serialize cleanly
  void clear_trailing_bits() {
    const int64_t used = block_count_ * block_count_;
    for (int64_t idx = used; idx < static_cast<int64_t>(bits_.size()) * 8; ++idx)
      bits_[static_cast<size_t>(idx >> 3)] &= static_cast<uint8_t>(~(1u << (7 - (idx & 7))));
  }

  int64_t block_count_ = 0;
  int64_t block_size_ = 0;
  std::vector<uint8_t> bits_;
};

}  // namespace dfs
