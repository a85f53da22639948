#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "als/bitvec.hpp"
#include "als/error.hpp"

namespace als {

/// Largest input count simulated exhaustively.
inline constexpr unsigned kMaxExhaustiveInputs = 16;

/// Truth table of input `index` over all 2^num_inputs patterns. Pattern p
/// assigns x_i = bit i of p.
inline BitVec input_projection(unsigned num_inputs, unsigned index) {
  static constexpr std::uint64_t kLow[6] = {
      0xaaaaaaaaaaaaaaaaull, 0xccccccccccccccccull, 0xf0f0f0f0f0f0f0f0ull,
      0xff00ff00ff00ff00ull, 0xffff0000ffff0000ull, 0xffffffff00000000ull};
  BitVec bv(std::size_t{1} << num_inputs);
  auto words = bv.words();
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (index < 6)
      words[w] = kLow[index];
    else
      words[w] = ((w >> (index - 6)) & 1u) ? ~std::uint64_t{0} : 0;
  }
  bv.trim();
  return bv;
}

/// Exact multi-output Boolean function: one 2^N-bit vector per output.
class TruthTable {
public:
  TruthTable() = default;
  TruthTable(unsigned num_inputs, std::vector<BitVec> outputs)
      : num_inputs_(num_inputs), outputs_(std::move(outputs)) {
    for (const auto& o : outputs_)
      if (o.size() != num_patterns())
        throw DimensionError("truth table output length must equal 2^num_inputs");
  }
  /// All-zero table.
  TruthTable(unsigned num_inputs, unsigned num_outputs)
      : num_inputs_(num_inputs), outputs_(num_outputs, BitVec(std::size_t{1} << num_inputs)) {}

  unsigned num_inputs() const noexcept { return num_inputs_; }
  unsigned num_outputs() const noexcept { return static_cast<unsigned>(outputs_.size()); }
  std::size_t num_patterns() const noexcept { return std::size_t{1} << num_inputs_; }

  const BitVec& output(unsigned j) const { return outputs_.at(j); }
  BitVec& output(unsigned j) { return outputs_.at(j); }
  const std::vector<BitVec>& outputs() const noexcept { return outputs_; }

  bool bit(unsigned output, std::size_t pattern) const { return outputs_.at(output).get(pattern); }

  /// Outputs on `pattern` read as an unsigned integer, output j = bit j.
  std::uint64_t value(std::size_t pattern) const {
    std::uint64_t v = 0;
    for (unsigned j = 0; j < outputs_.size(); ++j)
      if (outputs_[j].get(pattern)) v |= std::uint64_t{1} << j;
    return v;
  }

  friend bool operator==(const TruthTable&, const TruthTable&) = default;

private:
  unsigned num_inputs_ = 0;
  std::vector<BitVec> outputs_;
};

inline void require_same_shape(const TruthTable& a, const TruthTable& b) {
  if (a.num_inputs() != b.num_inputs() || a.num_outputs() != b.num_outputs())
    throw DimensionError("truth tables differ in input or output count");
}

/// Hex form of one output, LSB-first: character k holds bits 4k..4k+3 with
/// bit 4k as the nibble's least significant bit.
inline std::string to_hex(const BitVec& bits) {
  static constexpr char kDigits[] = "0123456789abcdef";
  const std::size_t n = (bits.size() + 3) / 4;
  std::string s(n, '0');
  for (std::size_t k = 0; k < n; ++k) {
    unsigned nib = 0;
    for (unsigned j = 0; j < 4 && 4 * k + j < bits.size(); ++j)
      if (bits.get(4 * k + j)) nib |= 1u << j;
    s[k] = kDigits[nib];
  }
  return s;
}

inline BitVec from_hex(std::string_view hex, std::size_t num_bits) {
  if (hex.size() != (num_bits + 3) / 4)
    throw ParseError("hex truth table has " + std::to_string(hex.size()) + " digits, expected " +
                         std::to_string((num_bits + 3) / 4),
                     0);
  BitVec bv(num_bits);
  for (std::size_t k = 0; k < hex.size(); ++k) {
    const char c = hex[k];
    unsigned nib;
    if (c >= '0' && c <= '9')
      nib = static_cast<unsigned>(c - '0');
    else if (c >= 'a' && c <= 'f')
      nib = static_cast<unsigned>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F')
      nib = static_cast<unsigned>(c - 'A' + 10);
    else
      throw ParseError(std::string("invalid hex digit '") + c + "'", k);
    for (unsigned j = 0; j < 4; ++j) {
      if (!((nib >> j) & 1u)) continue;
      if (4 * k + j >= num_bits) throw ParseError("hex truth table sets bits past its length", k);
      bv.set(4 * k + j);
    }
  }
  return bv;
}

inline std::vector<std::string> to_hex(const TruthTable& tt) {
  std::vector<std::string> out;
  for (const auto& o : tt.outputs()) out.push_back(to_hex(o));
  return out;
}

inline TruthTable truth_table_from_hex(unsigned num_inputs, const std::vector<std::string>& hex) {
  std::vector<BitVec> outs;
  for (const auto& h : hex) outs.push_back(from_hex(h, std::size_t{1} << num_inputs));
  return TruthTable(num_inputs, std::move(outs));
}

}  // namespace als
