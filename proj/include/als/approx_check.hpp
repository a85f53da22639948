#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "als/bitvec.hpp"
#include "als/error.hpp"
#include "als/random.hpp"
#include "als/sequence.hpp"
#include "als/tokens.hpp"
#include "als/truth_table.hpp"

namespace als {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

/// Shortest decimal that reads back as the same double.
inline std::string to_decimal(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string to_decimal(const Rational& r) { return to_decimal(to_double(r)); }

inline std::string to_string(const Rational& r) {
  std::string s = boost::multiprecision::numerator(r).str();
  if (boost::multiprecision::denominator(r) != 1) s += "/" + boost::multiprecision::denominator(r).str();
  return s;
}

/// User error bound epsilon in [0, 1], held as an exact ratio.
class ErrorBound {
public:
  constexpr ErrorBound() = default;

  static ErrorBound ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0 || num > den) throw ContractError("error bound must lie in [0, 1]");
    const std::uint64_t g = std::gcd(num, den);
    ErrorBound b;
    b.num_ = num / (g ? g : 1);
    b.den_ = den / (g ? g : 1);
    return b;
  }

  /// Exact parse of a decimal literal such as "0.05", "1" or "0.125".
  static ErrorBound parse(std::string_view s) {
    std::uint64_t num = 0, den = 1;
    bool dot = false, digits = false;
    for (char c : s) {
      if (c == '.' && !dot) {
        dot = true;
        continue;
      }
      if (c < '0' || c > '9' || den > 1'000'000'000'000ull) throw ContractError("bad error bound '" + std::string(s) + "'");
      num = num * 10 + static_cast<std::uint64_t>(c - '0');
      if (dot) den *= 10;
      digits = true;
    }
    if (!digits) throw ContractError("bad error bound '" + std::string(s) + "'");
    return ratio(num, den);
  }

  std::uint64_t numerator() const noexcept { return num_; }
  std::uint64_t denominator() const noexcept { return den_; }
  double value() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }
  Rational rational() const { return Rational(BigInt(num_), BigInt(den_)); }

  /// Largest mismatch count out of `total` patterns with count/total <= epsilon.
  std::uint64_t max_mismatches(std::uint64_t total) const noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(num_) * total) / den_);
  }
  bool allows(std::uint64_t mismatches, std::uint64_t total) const noexcept {
    return static_cast<unsigned __int128>(mismatches) * den_ <= static_cast<unsigned __int128>(num_) * total;
  }

  friend bool operator==(const ErrorBound& a, const ErrorBound& b) noexcept {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend bool operator<(const ErrorBound& a, const ErrorBound& b) noexcept {
    return static_cast<unsigned __int128>(a.num_) * b.den_ < static_cast<unsigned __int128>(b.num_) * a.den_;
  }
  friend bool operator<=(const ErrorBound& a, const ErrorBound& b) noexcept { return !(b < a); }

private:
  std::uint64_t num_ = 0;
  std::uint64_t den_ = 1;
};

inline std::string to_string(const ErrorBound& b) {
  if (b.denominator() == 1) return std::to_string(b.numerator());
  // Shortest exact decimal when the denominator divides a power of ten.
  std::uint64_t den = b.denominator(), num = b.numerator();
  std::uint64_t scale = 1;
  int places = 0;
  while (places < 18 && (scale % den) != 0) {
    scale *= 10;
    ++places;
  }
  if (scale % den != 0) return std::to_string(num) + "/" + std::to_string(den);
  const std::uint64_t v = num * (scale / den);
  std::string frac = std::to_string(v % scale);
  frac.insert(0, static_cast<std::size_t>(places) - frac.size(), '0');
  return std::to_string(v / scale) + "." + frac;
}

// ---------------------------------------------------------------------------
// Three-valued partial evaluation

/// Three-valued values of every output of a partial circuit, either over all
/// 2^N patterns or over K sampled patterns.
struct PartialEval {
  bool sampled = false;
  std::uint64_t seed = 0;
  std::vector<std::size_t> patterns;  // sampled mode only
  std::vector<TriVec> outputs;

  std::size_t num_patterns() const noexcept { return outputs.empty() ? 0 : outputs.front().ones.size(); }
  bool fully_determined() const {
    for (const auto& o : outputs)
      if (!o.determined().all()) return false;
    return true;
  }
};

/// Evaluates the partial forest of `state`; pending slots read as U.
inline PartialEval eval_partial(const PrefixState& state) {
  PartialEval pe;
  const auto& ctx = state.context();
  pe.sampled = ctx.sampled();
  pe.patterns = ctx.sample_patterns();
  for (unsigned j = 0; j < ctx.num_outputs(); ++j) pe.outputs.push_back(state.output_value(j));
  return pe;
}

/// Patterns (over the evaluation set) where any output is determined and wrong.
inline BitVec definite_mismatch_mask(const PartialEval& pe, const TruthTable& target) {
  if (pe.outputs.size() != target.num_outputs()) throw DimensionError("output count mismatch");
  const std::size_t n = pe.num_patterns();
  if (!pe.sampled && n != target.num_patterns()) throw DimensionError("pattern count mismatch");
  BitVec bad(n);
  for (unsigned j = 0; j < target.num_outputs(); ++j) {
    BitVec f;
    if (!pe.sampled) {
      f = target.output(j);
    } else {
      f = BitVec(n);
      for (std::size_t k = 0; k < n; ++k) f.set(k, target.bit(j, pe.patterns.at(k)));
    }
    const auto& o = pe.outputs[j];
    bad |= (o.ones & ~f) | (o.zeros & f);
  }
  return bad;
}

/// Lower bound on the error rate of every completion: the fraction of
/// patterns on which some output is already determined and differs.
inline Rational definite_mismatch_fraction(const PartialEval& pe, const TruthTable& target) {
  const BitVec bad = definite_mismatch_mask(pe, target);
  return Rational(BigInt(bad.count()), BigInt(pe.num_patterns()));
}

inline PrefixState state_with_target(const TokenSequence& prefix, const TruthTable& target,
                                     std::size_t max_len = kDefaultMaxLen, PatternSampling sampling = {}) {
  if (prefix.num_inputs != target.num_inputs() || prefix.num_outputs != target.num_outputs())
    throw DimensionError("prefix and target differ in shape");
  PrefixState st(SequenceContext::make(prefix.num_inputs, prefix.num_outputs, target, sampling,
                                       std::max(max_len, prefix.tokens.size() + 1)));
  for (const auto& t : prefix.tokens) st.push(t);
  return st;
}

/// True iff no pattern is definitely wrong (zero-error validation).
inline bool validate_exact(const TokenSequence& prefix, const TruthTable& target) {
  return state_with_target(prefix, target).mismatch_count() == 0;
}

/// Tokens that keep the definite error within `bound` and leave enough of
/// the length budget (EOS included) to close every pending slot.
inline std::vector<Token> feasible_tokens(const PrefixState& state, const ErrorBound& bound,
                                          std::size_t length_budget) {
  if (state.trees_complete()) throw ContractError("feasible_tokens called on a complete prefix");
  const auto& ctx = state.context();
  const std::uint64_t total = ctx.num_eval_patterns();
  const std::uint64_t allowed = bound.max_mismatches(total);
  const std::size_t len = state.length();
  const std::size_t pending = state.pending_slots();
  std::vector<Token> out;
  out.reserve(vocab_size(ctx.num_inputs()));
  if (len + 1 + (pending - 1) + 1 <= length_budget) {
    const auto counts = state.literal_mismatch_counts();
    for (std::uint32_t id = 0; id < counts.size(); ++id)
      if (counts[id] <= allowed) out.push_back(Token::lit(id / 2, id % 2 != 0));
  }
  if (len + 1 + (pending + 1) + 1 <= length_budget && state.mismatch_count() <= allowed) {
    out.push_back(Token::and_gate());
    out.push_back(Token::nand_gate());
  }
  return out;
}

inline std::vector<Token> feasible_tokens(const TokenSequence& prefix, const TruthTable& target,
                                          const ErrorBound& bound, std::size_t length_budget) {
  return feasible_tokens(state_with_target(prefix, target, length_budget), bound, length_budget);
}

// ---------------------------------------------------------------------------
// Error metrics over complete functions

/// Fraction of input patterns on which any output differs.
inline Rational error_rate(const TruthTable& g, const TruthTable& f) {
  require_same_shape(g, f);
  BitVec bad(g.num_patterns());
  for (unsigned j = 0; j < g.num_outputs(); ++j) bad |= g.output(j) ^ f.output(j);
  return Rational(BigInt(bad.count()), BigInt(g.num_patterns()));
}

/// Per-bit variant: mismatching (pattern, output) pairs over 2^N * M.
inline Rational error_rate_per_bit(const TruthTable& g, const TruthTable& f) {
  require_same_shape(g, f);
  std::size_t bad = 0;
  for (unsigned j = 0; j < g.num_outputs(); ++j) bad += (g.output(j) ^ f.output(j)).count();
  return Rational(BigInt(bad), BigInt(g.num_patterns() * g.num_outputs()));
}

inline void require_integer_width(const TruthTable& t) {
  if (t.num_outputs() > 32) throw CapacityError("integer metrics support at most 32 outputs");
}

/// Mean relative error distance with outputs read as unsigned integers.
inline Rational mred(const TruthTable& g, const TruthTable& f) {
  require_same_shape(g, f);
  require_integer_width(f);
  // Sum |g - f| per distinct f value, then divide once per value.
  std::map<std::uint64_t, unsigned __int128> by_value;
  for (std::size_t p = 0; p < f.num_patterns(); ++p) {
    const std::uint64_t fv = f.value(p), gv = g.value(p);
    const std::uint64_t d = gv > fv ? gv - fv : fv - gv;
    if (d) by_value[fv] += d;
  }
  Rational sum = 0;
  for (const auto& [fv, d] : by_value) {
    BigInt num = static_cast<std::uint64_t>(d >> 64);
    num <<= 64;
    num += static_cast<std::uint64_t>(d);
    sum += Rational(num, BigInt(std::max<std::uint64_t>(fv, 1)));
  }
  return sum / Rational(BigInt(f.num_patterns()));
}

/// Mean squared error with outputs read as unsigned integers.
inline Rational mse(const TruthTable& g, const TruthTable& f) {
  require_same_shape(g, f);
  require_integer_width(f);
  BigInt sum = 0;
  for (std::size_t p = 0; p < f.num_patterns(); ++p) {
    const std::uint64_t fv = f.value(p), gv = g.value(p);
    const std::uint64_t d = gv > fv ? gv - fv : fv - gv;
    sum += BigInt(d) * d;
  }
  return Rational(sum, BigInt(f.num_patterns()));
}

// ---------------------------------------------------------------------------
// Sampled estimation

/// Hoeffding half-width: with probability >= 1 - delta the sampled mean lies
/// within this distance of the true mean.
inline double hoeffding_half_width(std::size_t samples, double delta) {
  if (samples < 1) throw ContractError("sample count must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw ContractError("delta must lie in (0, 1)");
  return std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(samples)));
}

struct SampledError {
  Rational estimate;
  double half_width = 0.0;
};

/// Definite-mismatch fraction of an exhaustive partial evaluation measured on
/// K patterns drawn uniformly with replacement. With `enumerate` set, every
/// pattern is visited once instead and the result is exact.
inline SampledError sampled_error(const PartialEval& g_eval, const TruthTable& f, std::size_t samples,
                                  std::uint64_t seed, double delta = 0.05, bool enumerate = false) {
  if (g_eval.sampled) throw ContractError("sampled_error expects an exhaustive partial evaluation");
  const BitVec bad = definite_mismatch_mask(g_eval, f);
  if (enumerate) return {Rational(BigInt(bad.count()), BigInt(bad.size())), 0.0};
  if (samples < 1) throw ContractError("sample count must be positive");
  Rng rng(seed);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < samples; ++k) hits += bad.get(rng.uniform(bad.size()));
  return {Rational(BigInt(hits), BigInt(samples)), hoeffding_half_width(samples, delta)};
}

}  // namespace als
