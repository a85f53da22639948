#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "als/model/sampler.hpp"

using namespace als;
using namespace als::model;

namespace {

TrainingPair exact_pair(unsigned n, unsigned m, unsigned gates, std::uint64_t seed) {
  const auto c = random_circuit(n, m, gates, seed);
  return {encode_dfs(c), encode_dfs(simplify_exact(c)), ErrorBound(), eval_truth_table(c), "random"};
}

std::vector<TrainingPair> exact_pairs(unsigned n, std::size_t count, unsigned gates, std::uint64_t seed) {
  std::vector<TrainingPair> out;
  for (std::size_t i = 0; out.size() < count; ++i) {
    auto p = exact_pair(n, 1, gates, seed + i);
    if (p.source.size() + 1 <= 32 && p.target.size() + 1 <= 32) out.push_back(std::move(p));
  }
  return out;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

/// Central differences with h = 1e-5 relative to the coordinate.
template <class LossFn>
double worst_fd_error(ModelParams p, const ModelParams& analytic, LossFn loss, std::size_t* checked) {
  double worst = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x = p[i];
    const double h = 1e-5 * std::max(1.0, std::abs(x));
    p[i] = x + h;
    const double up = loss(p);
    p[i] = x - h;
    const double down = loss(p);
    p[i] = x;
    worst = std::max(worst, rel_err(analytic[i], (up - down) / (2 * h)));
    ++*checked;
  }
  return worst;
}

}  // namespace

TEST(ModelConfig, ValidationAndLayout) {
  ModelConfig c;
  EXPECT_EQ(c.vocab_size(), 19u);
  EXPECT_EQ(c.bucket_id(ErrorBound()), 20u);
  EXPECT_EQ(c.bucket_id(ErrorBound::parse("0.05")), 22u);
  EXPECT_EQ(c.bucket_id(ErrorBound::parse("0.07")), 22u);
  EXPECT_EQ(c.bucket_id(ErrorBound::parse("0.5")), 23u);
  c.n_heads = 3;
  EXPECT_THROW(ModelParams{c}, ContractError);
  const ModelParams p(ModelConfig{});
  EXPECT_EQ(p.layout().total, p.size());
  std::size_t sum = 0;
  for (const auto& [name, s] : p.layout().named) {
    EXPECT_EQ(s.offset, sum) << name;
    sum += s.size();
  }
  EXPECT_EQ(sum, p.size());
}

TEST(Forward, DeterministicAndFinite) {
  const auto p = ModelParams::init(ModelConfig{}, 1);
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto c = random_circuit(8, 2, 1 + static_cast<unsigned>(rng.uniform(8)), rng());
    const auto src = encode_dfs(c).tokens;
    if (src.size() + 1 > p.config().max_len) continue;
    const auto tgt = encode_dfs(simplify_exact(c)).tokens;
    const std::vector<Token> prefix(tgt.begin(), tgt.begin() + static_cast<long>(rng.uniform(tgt.size())));
    const auto z = forward_logits(p, src, ErrorBound::parse("0.05"), prefix);
    ASSERT_EQ(z.size(), 19);
    ASSERT_TRUE(z.allFinite());
    if (i < 10) {
      ASSERT_EQ(z, forward_logits(p, src, ErrorBound::parse("0.05"), prefix));
    }
  }
  EXPECT_THROW(forward_logits(p, std::vector<Token>(200, Token::lit(0)), ErrorBound(), {}), CapacityError);
}

TEST(Forward, BatchElementsAreIndependent) {
  const auto p = ModelParams::init(ModelConfig::micro(3), 2);
  const auto pairs = exact_pairs(3, 3, 5, 10);
  const std::vector<TrainingPair> ab{pairs[0], pairs[1], pairs[2]};
  const std::vector<TrainingPair> ba{pairs[2], pairs[0], pairs[1]};
  const auto l1 = ce_loss_and_grad(p, ab), l2 = ce_loss_and_grad(p, ba);
  EXPECT_NEAR(l1.loss, l2.loss, 1e-12);
  for (std::size_t i = 0; i < p.size(); ++i) ASSERT_NEAR(l1.grad[i], l2.grad[i], 1e-12);
  double sum = 0;
  for (const auto& e : pairs) sum += ce_loss_and_grad(p, std::span(&e, 1)).loss;
  EXPECT_NEAR(l1.loss, sum / 3, 1e-12);
}

TEST(Forward, IncrementalDecoderMatchesFullPass) {
  const auto p = ModelParams::init(ModelConfig{}, 3);
  const auto pair = exact_pair(8, 2, 12, 4);
  const auto enc = encode_source(p, pair.source.tokens, ErrorBound::parse("0.01"));
  DecoderSession dec(p, enc);
  std::vector<Token> prefix;
  for (const auto& t : pair.target.tokens) {
    const RowVec full = forward_logits(p, pair.source.tokens, ErrorBound::parse("0.01"), prefix);
    ASSERT_LT((full - dec.logits()).cwiseAbs().maxCoeff(), 1e-10);
    prefix.push_back(t);
    if (!t.is_eos()) dec.push(t);
  }
}

TEST(MaskedDistribution, Examples) {
  RowVec z(5);
  z << 0.3, -1.0, 2.0, 0.0, 0.5;
  const Vec all = masked_distribution(z, {0, 1, 2, 3, 4});
  EXPECT_LT((all - softmax(z)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(all.sum(), 1.0, 1e-15);
  const Vec one = masked_distribution(z, {3});
  EXPECT_EQ(one(3), 1.0);
  EXPECT_EQ(one.sum(), 1.0);
  const Vec uni = masked_distribution(RowVec::Constant(5, 0.7), {0, 2, 4});
  for (long i : {0, 2, 4}) EXPECT_DOUBLE_EQ(uni(i), 1.0 / 3);
  EXPECT_EQ(uni(1), 0.0);
  EXPECT_EQ(uni(3), 0.0);
  EXPECT_THROW(masked_distribution(z, {}), DeadEndError);
}

TEST(SampleToken, Modes) {
  Vec onehot = Vec::Zero(6);
  onehot(4) = 1;
  EXPECT_EQ(sample_token(onehot, SampleMode::Greedy, 1u), 4u);
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(sample_token(onehot, SampleMode::Stochastic, s), 4u);
  Vec tie(3);
  tie << 0.4, 0.2, 0.4;
  EXPECT_EQ(sample_token(tie, SampleMode::Greedy, 0u), 0u);
  Rng a(7), b(7);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_token(tie, SampleMode::Stochastic, a), sample_token(tie, SampleMode::Stochastic, b));
}

TEST(SampleToken, FrequenciesWithinThreeSigma) {
  Vec d(4);
  d << 0.1, 0.2, 0.3, 0.4;
  std::array<int, 4> counts{};
  Rng rng(11);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[sample_token(d, SampleMode::Stochastic, rng)];
  double chi2 = 0;
  for (int k = 0; k < 4; ++k) {
    const double e = n * d(k);
    EXPECT_LT(std::abs(counts[k] - e), 3 * std::sqrt(e * (1 - d(k)))) << k;
    chi2 += (counts[k] - e) * (counts[k] - e) / e;
  }
  EXPECT_LT(chi2, 16.27);  // 3 dof, p = 0.001
}

TEST(CeLoss, GradientMatchesFiniteDifferences) {
  const auto p = ModelParams::init(ModelConfig::micro(2), 21);
  const auto batch = exact_pairs(2, 3, 3, 100);
  const auto lg = ce_loss_and_grad(p, batch);
  std::size_t checked = 0;
  const double worst =
      worst_fd_error(p, lg.grad, [&](const ModelParams& q) { return ce_loss_and_grad(q, batch, false).loss; }, &checked);
  std::printf("CE finite differences: %zu coordinates, worst relative error %.3g\n", checked, worst);
  EXPECT_GE(checked, 1000u);
  EXPECT_LE(worst, 1e-4);
}

TEST(CeLoss, ApproachesZeroWithMargin) {
  auto p = ModelParams::init(ModelConfig::micro(2), 1);
  const auto pair = exact_pair(2, 1, 2, 3);
  // Push the head bias toward the single-token target of a 1-step decode.
  TrainingPair lit = pair;
  lit.target = {2, 1, {Token::eos()}};
  const auto& hb = p.layout().head_b;
  double prev = ce_loss_and_grad(p, std::span(&lit, 1), false).loss;
  for (double margin : {5.0, 10.0, 20.0, 40.0}) {
    p.mat(hb)(0, Token::eos().id(2)) = margin;
    const double cur = ce_loss_and_grad(p, std::span(&lit, 1), false).loss;
    EXPECT_LT(cur, prev);
    prev = cur;
  }
  EXPECT_LT(prev, 1e-12);
}

TEST(RlLoss, GradientMatchesFiniteDifferences) {
  const auto p = ModelParams::init(ModelConfig::micro(2), 22);
  std::vector<Episode> eps;
  Rng rng(3);
  SampleOptions opt;
  opt.length_budget = 24;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto c = random_circuit(2, 1, 3, 200 + s);
    eps.push_back(sample_episode(p, encode_dfs(c).tokens, eval_truth_table(c), ErrorBound::parse("0.25"), opt, rng));
  }
  const auto lg = rl_loss_and_grad(p, eps);
  std::size_t checked = 0;
  const double worst =
      worst_fd_error(p, lg.grad, [&](const ModelParams& q) { return rl_loss_and_grad(q, eps, false).loss; }, &checked);
  std::printf("RL finite differences: %zu coordinates, worst relative error %.3g\n", checked, worst);
  EXPECT_GE(checked, 1000u);
  EXPECT_LE(worst, 1e-3);
}

TEST(RlLoss, ZeroRewardsGiveZeroGradient) {
  const auto p = ModelParams::init(ModelConfig::micro(2), 5);
  Rng rng(1);
  const auto c = random_circuit(2, 1, 3, 9);
  auto ep = sample_episode(p, encode_dfs(c).tokens, eval_truth_table(c), ErrorBound(), {}, rng);
  std::fill(ep.rewards.begin(), ep.rewards.end(), 0.0);
  const std::vector<Episode> batch{ep, ep};
  const auto lg = rl_loss_and_grad(p, batch);
  for (std::size_t i = 0; i < p.size(); ++i) ASSERT_EQ(lg.grad[i], 0.0);
}

TEST(RlLoss, PositiveRewardRaisesActionProbability) {
  auto p = ModelParams::init(ModelConfig::micro(2), 6);
  const std::vector<Token> src{Token::lit(0), Token::eos()};
  Episode ep{src, ErrorBound(), {Token::lit(1)}, {{0, 1, 2, 3}}, {1.0}, true};
  auto prob = [&](const ModelParams& q) { return masked_distribution(forward_logits(q, src, ErrorBound(), {}), {0, 1, 2, 3})(2); };
  const double before = prob(p);
  const auto lg = rl_loss_and_grad(p, std::span(&ep, 1));
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= 0.1 * lg.grad[i];
  EXPECT_GT(prob(p), before);
}

TEST(TotalLoss, Examples) {
  EXPECT_EQ(total_loss(0.7, 123.0, 0.0), 0.7);
  EXPECT_DOUBLE_EQ(total_loss(0.5, 0.25, 1.0), 0.75);
  EXPECT_DOUBLE_EQ(total_loss(1.0, -0.2, 0.5), 0.9);
  EXPECT_THROW(total_loss(1, 1, -1), ContractError);
}

TEST(AdamWTest, ZeroGradZeroDecayKeepsParams) {
  auto p = ModelParams::init(ModelConfig::micro(2), 1);
  const auto before = p;
  AdamW opt({1e-3, 0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 5; ++i) opt.step(p, p.zeros_like());
  EXPECT_EQ(p, before);
  EXPECT_EQ(AdamWHyper{}.lr, 1e-4);
}

TEST(AdamWTest, NonFiniteGradientAbortsStep) {
  auto p = ModelParams::init(ModelConfig::micro(2), 1);
  const auto before = p;
  auto g = p.zeros_like();
  g[17] = std::nan("");
  AdamW opt;
  EXPECT_THROW(opt.step(p, g), DivergenceError);
  EXPECT_EQ(p, before);
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(AdamWTest, OverfitsOneBatch) {
  ModelConfig cfg = ModelConfig::micro(3);
  cfg.d_model = 32;
  cfg.d_ff = 64;
  auto p = ModelParams::init(cfg, 8);
  const auto batch = exact_pairs(3, 4, 4, 300);
  AdamW opt({1e-2, 0.9, 0.999, 1e-8, 0.0});
  double loss = 0;
  for (int step = 0; step < 200; ++step) {
    auto lg = ce_loss_and_grad(p, batch);
    loss = lg.loss;
    opt.step(p, lg.grad);
    ASSERT_TRUE(p.all_finite());
  }
  loss = ce_loss_and_grad(p, batch, false).loss;
  std::printf("overfit one batch: CE after 200 steps = %.5f\n", loss);
  EXPECT_LT(loss, 0.01);
}

TEST(AdamWTest, ShuffledLabelsScoreWorse) {
  ModelConfig cfg = ModelConfig::micro(3);
  cfg.d_model = 16;
  cfg.d_ff = 32;
  auto p = ModelParams::init(cfg, 9);
  const auto pairs = exact_pairs(3, 16, 5, 500);
  auto shuffled = pairs;
  for (std::size_t i = 0; i < shuffled.size(); ++i) shuffled[i].target = pairs[(i + 5) % pairs.size()].target;
  AdamW opt({3e-3, 0.9, 0.999, 1e-8, 0.0});
  for (int step = 0; step < 100; ++step) opt.step(p, ce_loss_and_grad(p, pairs).grad);
  EXPECT_GE(ce_loss_and_grad(p, shuffled, false).loss, ce_loss_and_grad(p, pairs, false).loss);
}

TEST(Checkpoint, RoundTripAtFloatPrecision) {
  ModelConfig cfg = ModelConfig::micro(4);
  cfg.epsilon_buckets = {ErrorBound(), ErrorBound::parse("0.25")};
  const auto p = ModelParams::init(cfg, 4);
  const auto path = (std::filesystem::temp_directory_path() / "als_ckpt_test.bin").string();
  save_checkpoint(p, path);
  const auto q = load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(q.config().d_model, 8u);
  EXPECT_EQ(q.config().num_inputs, 4u);
  ASSERT_EQ(q.config().epsilon_buckets.size(), 2u);
  EXPECT_EQ(q.config().epsilon_buckets[1], ErrorBound::parse("0.25"));
  ASSERT_EQ(q.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) ASSERT_EQ(q[i], static_cast<double>(static_cast<float>(p[i])));
}

TEST(Sampler, EpisodesRespectTheBound) {
  const auto p = ModelParams::init(ModelConfig::micro(4), 12);
  Rng rng(2);
  SampleOptions opt;
  opt.length_budget = 32;
  std::size_t violations = 0, runs = 0;
  for (std::uint64_t s = 0; s < 60; ++s) {
    const auto c = random_circuit(4, 1, 4, 700 + s);
    const auto f = eval_truth_table(c);
    for (const char* e : {"0", "0.01", "0.05", "0.1"}) {
      const auto eps = ErrorBound::parse(e);
      const auto ep = sample_episode(p, encode_dfs(c).tokens, f, eps, opt, rng);
      const auto g = decode_with_merge({4, 1, ep.tokens});
      violations += error_rate(eval_truth_table(g), f) > eps.rational();
      ++runs;
      ASSERT_EQ(ep.feasible.size(), ep.tokens.size());
    }
  }
  EXPECT_EQ(violations, 0u);
  EXPECT_EQ(runs, 240u);
}

TEST(Sampler, BudgetTooSmallIsADeadEnd) {
  const auto p = ModelParams::init(ModelConfig::micro(2), 1);
  Circuit x(2, 1);
  const auto a = x.add_gate(GateKind::Nand, NodeRef::input(0), NodeRef::input(1));
  const auto b = x.add_gate(GateKind::Nand, NodeRef::input(0, true), NodeRef::input(1, true));
  x.set_output(0, x.add_gate(GateKind::And, a, b));
  SampleOptions opt;
  opt.length_budget = 6;
  Rng rng(0);
  EXPECT_THROW(sample_episode(p, encode_dfs(x).tokens, eval_truth_table(x), ErrorBound(), opt, rng), DeadEndError);
  opt.length_budget = 8;
  const auto ep = sample_episode(p, encode_dfs(x).tokens, eval_truth_table(x), ErrorBound(), opt, rng);
  EXPECT_EQ(eval_truth_table(decode_with_merge({2, 1, ep.tokens})), eval_truth_table(x));
}
