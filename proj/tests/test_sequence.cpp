#include <gtest/gtest.h>

#include "als/circuit.hpp"
#include "als/sequence.hpp"
#include "als/tokens.hpp"

using namespace als;

namespace {

TokenSequence seq(unsigned n, unsigned m, std::vector<Token> ts) { return {n, m, std::move(ts)}; }

const Token AND = Token::and_gate();
const Token NAND = Token::nand_gate();
const Token EOS = Token::eos();
Token x(unsigned i) { return Token::lit(i); }
Token nx(unsigned i) { return Token::lit(i, true); }

Circuit fig2() {
  Circuit c(6, 2);
  const auto n1 = c.add_gate(GateKind::And, NodeRef::input(2), NodeRef::input(4));
  c.set_output(0, c.add_gate(GateKind::And, NodeRef::input(1), n1));
  c.set_output(1, c.add_gate(GateKind::And, n1, NodeRef::input(5)));
  return c;
}

}  // namespace

TEST(EncodeDfs, LiteralOutput) {
  Circuit c(4, 1);
  c.set_output(0, NodeRef::input(3));
  EXPECT_EQ(encode_dfs(c).tokens, (std::vector<Token>{x(3), EOS}));
}

TEST(EncodeDfs, Fig2UnfoldsSharedNode) {
  const auto s = encode_dfs(fig2());
  const std::vector<Token> expected{AND, x(1), AND, x(2), x(4), AND, AND, x(2), x(4), x(5), EOS};
  EXPECT_EQ(s.tokens, expected);
  EXPECT_EQ(tokens_to_text(s.tokens), "AND x1 AND x2 x4 AND AND x2 x4 x5 EOS");
  EXPECT_EQ(unfolded_length(fig2()), s.size());
  EXPECT_EQ(unfolded_gate_count(fig2()), 4u);
}

TEST(DecodeWithMerge, Fig2RecoversSharedNode) {
  const auto c = decode_with_merge(encode_dfs(fig2()));
  EXPECT_EQ(gate_count(c), 3u);
  EXPECT_EQ(c.num_nodes(), 3u);
  EXPECT_EQ(eval_truth_table(c), eval_truth_table(fig2()));
}

TEST(DecodeWithMerge, LiteralOnly) {
  const auto c = decode_with_merge(seq(1, 1, {x(0), EOS}));
  EXPECT_EQ(gate_count(c), 0u);
  EXPECT_EQ(c.output(0), NodeRef::input(0));
}

TEST(DecodeWithMerge, ConstantViaComplementPair) {
  Circuit k(3, 1);
  k.set_output(0, NodeRef::constant(true));
  const auto s = encode_dfs(k);
  EXPECT_EQ(s.tokens, (std::vector<Token>{NAND, x(0), nx(0), EOS}));
  const auto c = decode_with_merge(s);
  EXPECT_EQ(gate_count(c), 0u);
  EXPECT_EQ(c.output(0), NodeRef::constant(true));
}

TEST(DecodeWithMerge, ParseErrors) {
  try {
    decode_with_merge(seq(2, 1, {AND, x(0)}));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 2u);
  }
  try {
    decode_with_merge(seq(2, 1, {x(0), x(1), EOS}));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 1u);
  }
  try {
    decode_with_merge(seq(2, 2, {x(0), EOS}));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 1u);
  }
  EXPECT_THROW(decode_with_merge(seq(2, 1, {x(0), EOS, x(1)})), ParseError);
  EXPECT_THROW(decode_with_merge(seq(2, 1, {x(2), EOS})), ParseError);
}

TEST(DecodeWithMerge, RoundTripOnRandomCircuits) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto c = random_circuit(8, 2, 3 + seed % 18, seed);
    const auto d = decode_with_merge(encode_dfs(c));
    ASSERT_EQ(eval_truth_table(d), eval_truth_table(c)) << seed;
    ASSERT_LE(gate_count(d), unfolded_gate_count(c));
    ASSERT_EQ(gate_count(d), gate_count(structural_merge(c))) << seed;
    ASSERT_EQ(structural_merge(d), d) << seed;
  }
}

TEST(ParseState, PendingSlots) {
  EXPECT_EQ(parse_state(seq(2, 1, {})).pending_slots(), 1u);
  EXPECT_EQ(parse_state(seq(2, 3, {})).pending_slots(), 3u);
  EXPECT_EQ(parse_state(seq(2, 1, {AND})).pending_slots(), 2u);
  EXPECT_EQ(parse_state(seq(2, 1, {AND, AND})).pending_slots(), 3u);
  EXPECT_EQ(parse_state(seq(2, 1, {AND, x(0)})).pending_slots(), 1u);
  EXPECT_EQ(parse_state(seq(2, 2, {AND, x(0)})).pending_slots(), 2u);
  const auto done = parse_state(seq(2, 1, {AND, x(0), x(1)}));
  EXPECT_TRUE(done.trees_complete());
  EXPECT_EQ(done.pending_slots(), 0u);
  EXPECT_FALSE(done.finished());
  EXPECT_THROW(parse_state(seq(2, 1, {x(0), x(1)})), ParseError);
}

TEST(ParseState, EveryPrefixOfAnEncodingIsAccepted) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = encode_dfs(random_circuit(5, 2, 8, seed));
    for (std::size_t k = 0; k <= s.size(); ++k) {
      TokenSequence p{s.num_inputs, s.num_outputs, {s.tokens.begin(), s.tokens.begin() + static_cast<long>(k)}};
      const auto st = parse_state(p);
      ASSERT_EQ(st.length(), k);
      // Lower bound on the remaining length is exact for the true suffix.
      ASSERT_LE(st.min_tokens_to_finish(), s.size() - k);
    }
  }
}

TEST(Tokens, IdsAndText) {
  const unsigned n = 3;
  for (std::uint32_t id = 0; id < vocab_size(n); ++id) EXPECT_EQ(Token::from_id(id, n).id(n), id);
  EXPECT_EQ(AND.id(n), 6u);
  EXPECT_EQ(NAND.id(n), 7u);
  EXPECT_EQ(EOS.id(n), 8u);
  const auto ts = tokens_from_text("NAND !x2 AND x0 x1 EOS", n);
  EXPECT_EQ(ts, (std::vector<Token>{NAND, nx(2), AND, x(0), x(1), EOS}));
  EXPECT_EQ(tokens_to_text(ts), "NAND !x2 AND x0 x1 EOS");
  EXPECT_THROW(tokens_from_text("AND x3", n), ParseError);
  EXPECT_THROW(tokens_from_text("OR", n), ParseError);
}
