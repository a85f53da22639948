#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "als/circuit.hpp"
#include "als/error.hpp"

namespace als {

/// One symbol of the generative vocabulary: a literal, a gate or end-of-sequence.
struct Token {
  enum class Kind : std::uint8_t { Lit, And, Nand, Eos };

  Kind kind = Kind::Eos;
  std::uint32_t input = 0;
  bool negated = false;

  static constexpr Token lit(std::uint32_t i, bool neg = false) { return {Kind::Lit, i, neg}; }
  static constexpr Token gate(GateKind k) { return {k == GateKind::And ? Kind::And : Kind::Nand, 0, false}; }
  static constexpr Token and_gate() { return {Kind::And, 0, false}; }
  static constexpr Token nand_gate() { return {Kind::Nand, 0, false}; }
  static constexpr Token eos() { return {Kind::Eos, 0, false}; }

  constexpr bool is_lit() const noexcept { return kind == Kind::Lit; }
  constexpr bool is_gate() const noexcept { return kind == Kind::And || kind == Kind::Nand; }
  constexpr bool is_eos() const noexcept { return kind == Kind::Eos; }
  constexpr GateKind gate_kind() const noexcept { return kind == Kind::Nand ? GateKind::Nand : GateKind::And; }

  /// Dense id: x_i -> 2i, !x_i -> 2i+1, AND -> 2N, NAND -> 2N+1, EOS -> 2N+2.
  constexpr std::uint32_t id(unsigned num_inputs) const noexcept {
    switch (kind) {
      case Kind::Lit: return 2 * input + (negated ? 1u : 0u);
      case Kind::And: return 2 * num_inputs;
      case Kind::Nand: return 2 * num_inputs + 1;
      case Kind::Eos: return 2 * num_inputs + 2;
    }
    return 0;
  }
  static constexpr Token from_id(std::uint32_t id, unsigned num_inputs) {
    if (id < 2 * num_inputs) return lit(id / 2, (id & 1u) != 0);
    if (id == 2 * num_inputs) return and_gate();
    if (id == 2 * num_inputs + 1) return nand_gate();
    return eos();
  }

  friend constexpr bool operator==(const Token&, const Token&) = default;
};

/// Vocabulary size for N inputs: 2N literals, two gates and EOS.
constexpr unsigned vocab_size(unsigned num_inputs) { return 2 * num_inputs + 3; }

inline std::string to_string(Token t) {
  switch (t.kind) {
    case Token::Kind::Lit: return (t.negated ? "!x" : "x") + std::to_string(t.input);
    case Token::Kind::And: return "AND";
    case Token::Kind::Nand: return "NAND";
    case Token::Kind::Eos: return "EOS";
  }
  return {};
}

/// Prefix-order token string for a circuit with the given interface.
struct TokenSequence {
  unsigned num_inputs = 1;
  unsigned num_outputs = 1;
  std::vector<Token> tokens;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Space-separated text form, e.g. "AND x0 !x1 EOS".
inline std::string tokens_to_text(const std::vector<Token>& ts) {
  std::string out;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (i) out += ' ';
    out += to_string(ts[i]);
  }
  return out;
}

inline bool detail_parse_index(std::string_view s, std::uint32_t& out) {
  if (s.empty() || s.size() > 9) return false;
  std::uint32_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    v = v * 10 + static_cast<std::uint32_t>(c - '0');
  }
  out = v;
  return true;
}

inline std::vector<Token> tokens_from_text(std::string_view text, unsigned num_inputs) {
  std::vector<Token> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) {
    const std::size_t pos = out.size();
    if (w == "AND") {
      out.push_back(Token::and_gate());
    } else if (w == "NAND") {
      out.push_back(Token::nand_gate());
    } else if (w == "EOS") {
      out.push_back(Token::eos());
    } else {
      const bool neg = w.size() > 1 && w[0] == '!';
      const std::string_view body = std::string_view(w).substr(neg ? 1 : 0);
      std::uint32_t idx = 0;
      if (body.size() < 2 || body[0] != 'x' || !detail_parse_index(body.substr(1), idx))
        throw ParseError("bad token '" + w + "'", pos);
      if (idx >= num_inputs) throw ParseError("token '" + w + "' exceeds input count", pos);
      out.push_back(Token::lit(idx, neg));
    }
  }
  return out;
}

}  // namespace als
