#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include <boost/container/small_vector.hpp>

namespace als {

/// Fixed-length bit vector backed by 64-bit words. Bits past `size()` in the
/// last word are kept zero so that equality and popcount need no masking.
/// Up to 256 bits (8 inputs) live inline.
class BitVec {
public:
  BitVec() = default;
  explicit BitVec(std::size_t num_bits, bool value = false)
      : bits_(num_bits), words_((num_bits + 63) / 64, value ? ~std::uint64_t{0} : 0) {
    trim();
  }

  std::size_t size() const noexcept { return bits_; }
  std::size_t num_words() const noexcept { return words_.size(); }
  std::span<const std::uint64_t> words() const noexcept { return {words_.data(), words_.size()}; }
  std::span<std::uint64_t> words() noexcept { return {words_.data(), words_.size()}; }

  bool get(std::size_t i) const noexcept { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(std::size_t i, bool v = true) noexcept {
    const std::uint64_t m = std::uint64_t{1} << (i & 63);
    if (v)
      words_[i >> 6] |= m;
    else
      words_[i >> 6] &= ~m;
  }

  std::size_t count() const noexcept {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }
  bool none() const noexcept {
    return std::all_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w == 0; });
  }
  bool all() const noexcept { return count() == bits_; }

  BitVec& operator&=(const BitVec& o) noexcept {
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
    return *this;
  }
  BitVec& operator|=(const BitVec& o) noexcept {
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
    return *this;
  }
  BitVec& operator^=(const BitVec& o) noexcept {
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] ^= o.words_[i];
    return *this;
  }
  BitVec& flip() noexcept {
    for (auto& w : words_) w = ~w;
    trim();
    return *this;
  }

  friend BitVec operator&(BitVec a, const BitVec& b) noexcept { return a &= b; }
  friend BitVec operator|(BitVec a, const BitVec& b) noexcept { return a |= b; }
  friend BitVec operator^(BitVec a, const BitVec& b) noexcept { return a ^= b; }
  friend BitVec operator~(BitVec a) noexcept { return a.flip(); }
  friend bool operator==(const BitVec& a, const BitVec& b) noexcept {
    return a.bits_ == b.bits_ && std::equal(a.words_.begin(), a.words_.end(), b.words_.begin(), b.words_.end());
  }

  std::uint64_t hash() const noexcept {
    std::uint64_t h = 0x9e3779b97f4a7c15ull ^ bits_;
    for (auto w : words_) {
      h ^= w + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      h *= 0xff51afd7ed558ccdull;
    }
    return h;
  }

  /// Clears bits beyond size() in the last word.
  void trim() noexcept {
    if (bits_ % 64 != 0 && !words_.empty()) words_.back() &= (std::uint64_t{1} << (bits_ % 64)) - 1;
  }

private:
  std::size_t bits_ = 0;
  boost::container::small_vector<std::uint64_t, 4> words_;
};

struct BitVecHash {
  std::size_t operator()(const BitVec& b) const noexcept { return static_cast<std::size_t>(b.hash()); }
};

}  // namespace als
