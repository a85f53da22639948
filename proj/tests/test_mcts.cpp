#include <gtest/gtest.h>

#include "als/mcts.hpp"
#include "als/pipeline/oracle.hpp"
#include "oracles.hpp"

using namespace als;

namespace {

TruthTable two_input(unsigned code) {
  return oracle::table_from(2, [code](std::size_t p) { return (code >> p) & 1u; });
}

TokenSequence source_for(const TruthTable& f) {
  // Any exact realization serves as the conditioning source.
  Circuit c(f.num_inputs(), f.num_outputs());
  for (unsigned j = 0; j < f.num_outputs(); ++j) c.set_output(j, NodeRef::input(0));
  return encode_dfs(c);
}

SearchConfig small(unsigned sims) {
  SearchConfig cfg;
  cfg.simulations = sims;
  return cfg;
}

}  // namespace

TEST(Puct, Examples) {
  SearchNode node;
  node.visits = 9;
  Edge fresh{Token::lit(0), 0.25};
  EXPECT_DOUBLE_EQ(puct_score(node, fresh, 2.0), 2.0 * 0.25 * 3.0);

  Edge a{Token::lit(0), 0.3}, b{Token::lit(1), 0.3};
  a.visits = b.visits = 3;
  a.value = -1;
  b.value = -2;
  EXPECT_GT(puct_score(node, a, 1.0), puct_score(node, b, 1.0));

  SearchNode hand;
  hand.visits = 4;
  Edge h{Token::lit(0), 0.5};
  h.value = -2;
  h.visits = 2;
  EXPECT_NEAR(puct_score(hand, h, 1.0), -1.0 + 0.5 * std::sqrt(4.0 / 3.0), 1e-15);
}

TEST(Backpropagate, SuffixSums) {
  std::vector<SearchNode> tree(3);
  for (auto& n : tree) n.edges.push_back(Edge{Token::lit(0), 1.0});
  backpropagate(tree, {{0, 0}}, {2.5});
  EXPECT_EQ(tree[0].edges[0].value, 2.5);
  EXPECT_EQ(tree[0].edges[0].visits, 1u);
  backpropagate(tree, {{0, 0}}, {-1.0});
  EXPECT_EQ(tree[0].edges[0].value, 1.5);
  EXPECT_EQ(tree[0].edges[0].visits, 2u);

  std::vector<SearchNode> path3(3);
  for (auto& n : path3) n.edges.push_back(Edge{Token::lit(0), 1.0});
  backpropagate(path3, {{0, 0}, {1, 0}, {2, 0}}, {-1, 0, -1});
  EXPECT_EQ(path3[0].edges[0].value, -2);
  EXPECT_EQ(path3[1].edges[0].value, -1);
  EXPECT_EQ(path3[2].edges[0].value, -1);
  EXPECT_THROW(backpropagate(path3, {{0, 0}}, {}), DimensionError);
}

TEST(StepReward, Examples) {
  Circuit c(2, 2);
  const auto g = c.add_gate(GateKind::And, NodeRef::input(0), NodeRef::input(1));
  c.set_output(0, g);
  c.set_output(1, g);
  const auto f = eval_truth_table(c);
  const RewardConfig rc;
  const auto seq = tokens_from_text("AND x0 x1 AND x0 x1 EOS", 2);
  PrefixState st = state_with_target({2, 2, {}}, f);
  std::vector<double> r;
  for (auto t : seq) {
    r.push_back(step_reward(st, t, ErrorBound(), rc));
    st.push(t);
  }
  EXPECT_EQ(r, (std::vector<double>{-1, 0, 0, -1, 0, 1, 0}));
  // The duplicate subtree nets -1 + 1 = 0.
  EXPECT_EQ(r[3] + r[4] + r[5], 0.0);

  // Hinge: a definite error of 1/2 against a bound of 1/4, beta = 10.
  const auto x0 = oracle::table_from(2, [](auto p) { return p & 1u; });
  PrefixState s2 = state_with_target({2, 1, {}}, x0);
  EXPECT_DOUBLE_EQ(step_reward(s2, Token::lit(1), ErrorBound::parse("0.25"), rc), -10 * 0.25);
}

TEST(RunSearch, LiteralTarget) {
  const auto f = oracle::table_from(3, [](auto p) { return p & 1u; });
  const auto r = run_search(nullptr, source_for(f), f, ErrorBound(), small(32), 1);
  EXPECT_EQ(r.gate_count, 0u);
  EXPECT_EQ(r.circuit.output(0), NodeRef::input(0));
  EXPECT_TRUE(r.verified);
}

TEST(RunSearch, ConstantCollapse) {
  const auto f = oracle::table_from(4, [](auto p) { return p == 15; });  // ER to const0 is 1/16
  const auto r = run_search(nullptr, source_for(f), f, ErrorBound::parse("0.1"), small(64), 2);
  EXPECT_EQ(r.gate_count, 0u);
  EXPECT_EQ(r.circuit.output(0), NodeRef::constant(false));
  EXPECT_TRUE(r.verified);
}

TEST(RunSearch, MatchesOracleOnTwoInputFunctions) {
  for (unsigned code = 0; code < 16; ++code) {
    const auto f = two_input(code);
    const auto o = pipeline::brute_force_oracle(f, ErrorBound(), 5);
    ASSERT_TRUE(o.min_gates.has_value());
    ASSERT_EQ(eval_truth_table(o.witness), f);
    ASSERT_EQ(gate_count(o.witness), *o.min_gates);
    const auto r = run_search(nullptr, source_for(f), f, ErrorBound(), small(512), code);
    EXPECT_EQ(r.gate_count, *o.min_gates) << "function " << code;
    EXPECT_TRUE(r.verified);
    EXPECT_TRUE(r.visit_counts_consistent);
  }
}

TEST(RunSearch, SoundnessAnytimeAndConservation) {
  std::size_t violations = 0;
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto c = random_circuit(5, 2, 4, 900 + s);
    const auto f = eval_truth_table(c);
    const auto eps = std::vector<ErrorBound>{ErrorBound(), ErrorBound::parse("0.01"), ErrorBound::parse("0.05"),
                                             ErrorBound::parse("0.1")}[s % 4];
    const auto r = run_search(nullptr, encode_dfs(c), f, eps, small(24), s);
    violations += error_rate(eval_truth_table(r.circuit), f) > eps.rational();
    EXPECT_TRUE(r.visit_counts_consistent);
    for (std::size_t i = 1; i < r.best_return_trace.size(); ++i)
      ASSERT_GE(r.best_return_trace[i], r.best_return_trace[i - 1]);
  }
  EXPECT_EQ(violations, 0u);
}

TEST(RunSearch, EveryRolloutAndCommitRuleIsSound) {
  const auto p = model::ModelParams::init(model::ModelConfig::micro(4), 6);
  for (auto mode : {RolloutMode::Uniform, RolloutMode::Guided, RolloutMode::Policy})
    for (bool follow : {false, true})
      for (std::uint64_t s = 0; s < 8; ++s) {
        const auto c = random_circuit(4, 2, 5, 300 + s);
        const auto f = eval_truth_table(c);
        const auto eps = s % 2 ? ErrorBound::parse("0.1") : ErrorBound();
        auto cfg = small(12);
        cfg.rollout = mode;
        cfg.follow_incumbent = follow;
        const auto r = run_search(mode == RolloutMode::Policy ? &p : nullptr, encode_dfs(c), f, eps, cfg, s);
        EXPECT_LE(error_rate(eval_truth_table(r.circuit), f), eps.rational());
        EXPECT_TRUE(r.verified);
        EXPECT_TRUE(r.visit_counts_consistent);
        const auto again = run_search(mode == RolloutMode::Policy ? &p : nullptr, encode_dfs(c), f, eps, cfg, s);
        EXPECT_EQ(again.tokens, r.tokens);
      }
}

TEST(RunSearch, PolicyPriorsAndRollouts) {
  const auto p = model::ModelParams::init(model::ModelConfig::micro(3), 4);
  const auto c = random_circuit(3, 1, 4, 77);
  const auto f = eval_truth_table(c);
  auto cfg = small(16);
  cfg.length_budget = 32;
  cfg.rollout = RolloutMode::Policy;
  const auto r = run_search(&p, encode_dfs(c), f, ErrorBound::parse("0.05"), cfg, 3);
  EXPECT_TRUE(r.verified);
  const auto again = run_search(&p, encode_dfs(c), f, ErrorBound::parse("0.05"), cfg, 3);
  EXPECT_EQ(again.tokens, r.tokens);
}

TEST(RunSearch, FailsWhenBudgetTooSmall) {
  const auto x = two_input(0b0110);
  auto cfg = small(16);
  cfg.length_budget = 6;
  EXPECT_THROW(run_search(nullptr, source_for(x), x, ErrorBound(), cfg, 0), SynthesisFailure);
  cfg.length_budget = 1;
  EXPECT_THROW(run_search(nullptr, source_for(x), x, ErrorBound(), cfg, 0), ContractError);
}

TEST(Oracle, Examples) {
  const auto x0 = two_input(0b1010);
  EXPECT_EQ(pipeline::brute_force_oracle(x0, ErrorBound(), 5).min_gates, 0u);
  const auto x = two_input(0b0110);
  const auto exact = pipeline::brute_force_oracle(x, ErrorBound(), 5);
  const auto loose = pipeline::brute_force_oracle(x, ErrorBound::parse("0.25"), 5);
  ASSERT_TRUE(exact.min_gates && loose.min_gates);
  std::printf("XOR2 minimum: %zu gates exact, %zu gates at 0.25\n", *exact.min_gates, *loose.min_gates);
  EXPECT_EQ(*exact.min_gates, 3u);
  EXPECT_LT(*loose.min_gates, *exact.min_gates);
  EXPECT_LE(error_rate(eval_truth_table(loose.witness), x), ErrorBound::parse("0.25").rational());
  // Three-input parity needs more than two gates.
  const auto x3 = oracle::table_from(3, [](auto p) { return std::popcount(p) & 1; });
  EXPECT_FALSE(pipeline::brute_force_oracle(x3, ErrorBound(), 2).min_gates.has_value());
  EXPECT_THROW(pipeline::brute_force_oracle(oracle::table_from(4, [](auto) { return false; }), ErrorBound(), 3),
               CapacityError);
}
