#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <vector>

namespace cy2mixer::gf2 {

/// Dense bit vector over GF(2); addition is XOR.
class BitVector {
 public:
  BitVector() = default;
  explicit BitVector(std::size_t size) : size_(size), words_((size + 63) / 64, 0) {}

  std::size_t size() const noexcept { return size_; }
  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1U; }
  void flip(std::size_t i) { words_[i / 64] ^= std::uint64_t{1} << (i % 64); }
  void set(std::size_t i) { words_[i / 64] |= std::uint64_t{1} << (i % 64); }

  BitVector& operator^=(const BitVector& o) {
    for (std::size_t w = 0; w < words_.size(); ++w) words_[w] ^= o.words_[w];
    return *this;
  }

  bool none() const {
    for (auto w : words_)
      if (w) return false;
    return true;
  }

  std::size_t count() const {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }

  /// Index of the lowest set bit, or size() when zero.
  std::size_t lowest() const {
    for (std::size_t w = 0; w < words_.size(); ++w)
      if (words_[w]) return w * 64 + static_cast<std::size_t>(std::countr_zero(words_[w]));
    return size_;
  }

  bool operator==(const BitVector&) const = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Rank over GF(2) by incremental elimination keyed on the lowest set bit.
inline std::size_t rank(std::span<const BitVector> rows) {
  std::vector<BitVector> pivots;  // pivots[k] has lowest bit pivot_col[k]
  std::vector<std::size_t> pivot_col;
  for (const auto& r : rows) {
    BitVector v = r;
    bool reduced = true;
    while (reduced && !v.none()) {
      reduced = false;
      const auto low = v.lowest();
      for (std::size_t k = 0; k < pivots.size(); ++k) {
        if (pivot_col[k] == low) {
          v ^= pivots[k];
          reduced = true;
          break;
        }
      }
    }
    if (!v.none()) {
      pivot_col.push_back(v.lowest());
      pivots.push_back(std::move(v));
    }
  }
  return pivots.size();
}

}  // namespace cy2mixer::gf2
