// One pass/fail line per acceptance criterion. Usage: acceptance [N ...]
// runs only the listed criteria; exit status is nonzero if any fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>

#include "als/pipeline/evolve.hpp"
#include "als/pipeline/oracle.hpp"
#include "als/pipeline/pareto.hpp"
#include "oracles.hpp"

using namespace als;
using namespace als::pipeline;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass;
  std::string detail;
};

const std::vector<ErrorBound>& sweep_set() {
  static const auto eps = default_epsilons();
  return eps;
}

// ---------------------------------------------------------------------------

Verdict round_trip() {
  const auto t0 = Clock::now();
  std::size_t ok = 0;
  const std::size_t total = 1000;
  for (std::size_t i = 0; i < total; ++i) {
    const Circuit c = random_circuit(8, 2, 1 + static_cast<unsigned>(i % 40), Rng::derive(1, i));
    const Circuit d = decode_with_merge(encode_dfs(c));
    ok += eval_truth_table(d) == oracle::naive_truth_table(c) && gate_count(d) <= unfolded_gate_count(c);
  }
  const double dt = seconds_since(t0);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu/%zu circuits, %.2f s", ok, total, dt);
  return {ok == total && dt < 10, buf};
}

/// Synthesis runs shared by the soundness checks: targets from the benchmark
/// corpus, bounds cycling through the sweep set.
struct SoundnessRun {
  TruthTable f;
  ErrorBound eps;
  SearchResult r;
};

std::vector<SoundnessRun>& soundness_runs(double* seconds = nullptr) {
  static std::vector<SoundnessRun> runs;
  static double took = 0;
  if (runs.empty()) {
    const auto t0 = Clock::now();
    const auto corpus = benchmark_corpus(125, 500);
    SearchConfig cfg;
    cfg.simulations = 8;
    for (std::size_t i = 0; i < 500; ++i) {
      const Circuit& c = corpus[i / 4];
      const TruthTable f = eval_truth_table(c);
      const ErrorBound eps = sweep_set()[i % 4];
      runs.push_back({f, eps, run_search(nullptr, encode_dfs(c), f, eps, cfg, Rng::derive(2, i))});
    }
    took = seconds_since(t0);
  }
  if (seconds) *seconds = took;
  return runs;
}

Verdict masking_soundness() {
  double dt = 0;
  const auto& runs = soundness_runs(&dt);
  std::size_t violations = 0;
  for (const auto& run : runs)
    violations += error_rate(eval_truth_table(decode_with_merge(run.r.tokens)), run.f) > run.eps.rational();
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu runs, %zu violations, %.1f s", runs.size(), violations, dt);
  return {violations == 0 && dt < 600, buf};
}

Verdict estimate_soundness() {
  const auto& runs = soundness_runs();
  std::size_t bad = 0, prefixes = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    const auto& run = runs[i];
    const auto& toks = run.r.tokens.tokens;
    const Rational final_er = error_rate(eval_truth_table(decode_with_merge(run.r.tokens)), run.f);
    PrefixState st = state_with_target({8, 2, {}}, run.f);
    Rational prev = 0;
    bool ok = true;
    for (std::size_t k = 0; k <= toks.size(); ++k) {
      const Rational e = definite_mismatch_fraction(eval_partial(st), run.f);
      ok = ok && e >= prev && e <= final_er;
      prev = e;
      ++prefixes;
      if (k < toks.size()) st.push(toks[k]);
    }
    bad += !ok;
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "200 sequences, %zu prefixes, %zu failing sequences", prefixes, bad);
  return {bad == 0, buf};
}

Verdict oracle_optimality() {
  const auto t0 = Clock::now();
  std::size_t match = 0;
  SearchConfig cfg;
  cfg.simulations = 512;
  for (unsigned code = 0; code < 16; ++code) {
    const auto f = oracle::table_from(2, [code](std::size_t p) { return (code >> p) & 1u; });
    const auto o = brute_force_oracle(f, ErrorBound(), 5);
    Circuit src(2, 1);
    src.set_output(0, NodeRef::input(0));
    const auto r = run_search(nullptr, encode_dfs(src), f, ErrorBound(), cfg, code);
    match += o.min_gates && r.gate_count == *o.min_gates;
  }
  const double dt = seconds_since(t0);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu/16 functions at the oracle minimum, %.1f s", match, dt);
  return {match == 16 && dt < 120, buf};
}

/// Best-of-3 sweep over the 100-target corpus, shared by the approximation
/// and Pareto checks.
struct CorpusSweep {
  std::vector<std::vector<std::size_t>> first_seed;  // [target][eps] gate count, seed 0
  std::vector<std::vector<std::size_t>> best;        // [target][eps] best of 3
  std::size_t dominated = 0;
  std::size_t failures = 0;
  double seconds = 0;
};

const CorpusSweep& corpus_sweep() {
  static CorpusSweep s;
  static bool done = false;
  if (done) return s;
  const auto t0 = Clock::now();
  const auto corpus = benchmark_corpus(100, 2026);
  SearchConfig cfg;
  cfg.simulations = 64;
  for (std::size_t t = 0; t < corpus.size(); ++t) {
    std::vector<std::size_t> first, best;
    std::vector<ParetoPoint> pts;
    for (const auto& eps : sweep_set()) {
      std::size_t b = gate_count(corpus[t]), f0 = b;
      std::optional<ParetoPoint> bp;
      for (unsigned k = 0; k < 3; ++k) {
        try {
          const auto r = run_search(nullptr, encode_dfs(corpus[t]), eval_truth_table(corpus[t]), eps, cfg,
                                    Rng::derive(t, k));
          if (k == 0) f0 = r.gate_count;
          if (!bp || r.gate_count < bp->gate_count) bp = ParetoPoint{eps, r.error, r.gate_count, r.circuit};
        } catch (const SynthesisFailure&) {
          ++s.failures;
        }
      }
      if (bp) {
        b = bp->gate_count;
        pts.push_back(*bp);
      }
      first.push_back(f0);
      best.push_back(b);
    }
    const auto front = dominance_filter(pts);
    for (const auto& a : front)
      for (const auto& c : front) s.dominated += dominates(a, c);
    s.first_seed.push_back(first);
    s.best.push_back(best);
  }
  s.seconds = seconds_since(t0);
  done = true;
  return s;
}

Verdict approximation_benefit() {
  const auto& s = corpus_sweep();
  double g0 = 0, g10 = 0;
  for (const auto& row : s.first_seed) {
    g0 += static_cast<double>(row[0]);
    g10 += static_cast<double>(row[3]);
  }
  g0 /= static_cast<double>(s.first_seed.size());
  g10 /= static_cast<double>(s.first_seed.size());

  // Sparse functions whose error rate against a constant is within the bound.
  const auto t0 = Clock::now();
  std::size_t cases = 0, collapsed = 0;
  Rng rng(77);
  SearchConfig cfg;
  cfg.simulations = 64;
  for (int i = 0; i < 20; ++i) {
    const unsigned ones = static_cast<unsigned>(rng.uniform(26));
    std::set<std::size_t> hot;
    while (hot.size() < ones) hot.insert(rng.uniform(256));
    const bool invert = rng.uniform(2);
    std::vector<std::uint64_t> vals(256);
    for (std::size_t p = 0; p < vals.size(); ++p) {
      const std::uint64_t v = hot.count(p) ? 1 + p % 3 : 0;
      vals[p] = invert ? (3 ^ v) : v;
    }
    const auto f = oracle::table_from_values(8, 2, vals);
    const Rational const_er(BigInt(hot.size()), BigInt(256));
    Circuit src(8, 2);
    src.set_output(0, NodeRef::input(0));
    for (const auto& eps : sweep_set()) {
      if (const_er > eps.rational()) continue;
      ++cases;
      try {
        const auto r = run_search(nullptr, encode_dfs(src), f, eps, cfg, Rng::derive(9, cases));
        collapsed += r.gate_count == 0;
      } catch (const SynthesisFailure&) {
      }
    }
  }
  const double dt = s.seconds + seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf, "mean gates %.2f at eps=0 vs %.2f at eps=0.1; constant collapse %zu/%zu; %.0f s", g0,
                g10, collapsed, cases, dt);
  return {g10 < g0 && collapsed == cases && cases > 0 && dt < 1800, buf};
}

Verdict pareto_behavior() {
  const auto& s = corpus_sweep();
  std::size_t mono = 0;
  for (const auto& row : s.best) mono += row[1] <= row[0] && row[2] <= row[1] && row[3] <= row[2];
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu/%zu targets non-increasing, %zu dominated points after filtering", mono,
                s.best.size(), s.dominated);
  return {s.dominated == 0 && mono * 5 >= s.best.size() * 4, buf};
}

// ---------------------------------------------------------------------------

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

template <class LossFn>
double worst_fd_error(model::ModelParams p, const model::ModelParams& analytic, LossFn loss, std::size_t& checked) {
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
    ++checked;
  }
  return worst;
}

Verdict gradient_correctness() {
  const auto t0 = Clock::now();
  const auto p = model::ModelParams::init(model::ModelConfig::micro(2), 21);
  std::vector<TrainingPair> batch;
  for (std::uint64_t s = 0; batch.size() < 3; ++s) {
    const auto c = random_circuit(2, 1, 3, 100 + s);
    batch.push_back({encode_dfs(c), encode_dfs(simplify_exact(c)), ErrorBound(), eval_truth_table(c)});
  }
  std::size_t ce_n = 0, rl_n = 0;
  const double ce_worst = worst_fd_error(p, model::ce_loss_and_grad(p, batch).grad,
                                         [&](const auto& q) { return model::ce_loss_and_grad(q, batch, false).loss; }, ce_n);
  std::vector<model::Episode> eps;
  Rng rng(3);
  model::SampleOptions opt;
  opt.length_budget = 24;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto c = random_circuit(2, 1, 3, 200 + s);
    eps.push_back(model::sample_episode(p, encode_dfs(c).tokens, eval_truth_table(c), ErrorBound::parse("0.25"), opt, rng));
  }
  const double rl_worst = worst_fd_error(p, model::rl_loss_and_grad(p, eps).grad,
                                         [&](const auto& q) { return model::rl_loss_and_grad(q, eps, false).loss; }, rl_n);
  const double dt = seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf, "CE worst %.2g over %zu coords, RL worst %.2g over %zu coords, %.1f s", ce_worst, ce_n,
                rl_worst, rl_n, dt);
  return {ce_worst <= 1e-4 && rl_worst <= 1e-3 && ce_n >= 1000 && rl_n >= 1000 && dt < 300, buf};
}

Verdict training_signal() {
  const auto t0 = Clock::now();
  // Overfit 100 exact pairs.
  PretrainSpec ps;
  ps.num_inputs = 3;
  ps.num_outputs = 1;
  ps.max_gates = 6;
  ps.max_tokens = 31;
  auto pairs = gen_pretrain_dataset(100, 31, ps).records;
  auto cfg = model::ModelConfig::micro(3);
  cfg.d_model = 32;
  cfg.n_heads = 4;
  cfg.d_ff = 64;
  auto p = model::ModelParams::init(cfg, 8);
  model::AdamW opt({1e-2, 0.9, 0.999, 1e-8, 0.0});
  double acc = 0;
  std::size_t steps = 0;
  for (; steps < 500 && acc <= 0.99; ++steps) {
    auto lg = model::ce_loss_and_grad(p, pairs);
    opt.step(p, lg.grad);
    if (steps % 10 == 9) acc = model::ce_loss_and_grad(p, pairs, false).accuracy();
  }
  acc = model::ce_loss_and_grad(p, pairs, false).accuracy();

  // RL fine-tuning: greedy reward on 50 held-out targets at 10 checkpoints.
  FinetuneSpec fs;
  fs.corpus = {4, 2, 10, 3, 40};
  fs.search.simulations = 16;
  fs.search.length_budget = 64;
  auto data = gen_finetune_dataset(70, 41, fs).data;
  std::vector<TrainingPair> train, held;
  for (std::size_t i = 0; i < data.size(); ++i) (held.size() < 50 && i % 4 == 3 ? held : train).push_back(data.records[i]);
  auto mcfg = model::ModelConfig::micro(4);
  mcfg.d_model = 32;
  mcfg.n_heads = 4;
  mcfg.d_ff = 64;
  mcfg.max_len = 64;
  auto q = model::ModelParams::init(mcfg, 12);
  TrainHyper h;
  h.adam.lr = 3e-3;
  h.batch = 8;
  h.epochs = 10;
  h.seed = 4;
  RlHyper rl;
  rl.lambda = 0.05;
  rl.group = 4;
  rl.sample.length_budget = 64;
  model::SampleOptions eval_opt;
  eval_opt.length_budget = 64;
  std::vector<double> curve;
  std::size_t dead = 0;
  finetune_rl(q, train, {}, h, rl, [&](const EpochReport& r) {
    curve.push_back(mean_greedy_reward(q, held, eval_opt, &dead));
    std::printf("  checkpoint %u: train CE %.3f, held-out greedy reward %.3f\n", r.epoch, r.train_ce, curve.back());
  });
  const double dt = seconds_since(t0);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "overfit accuracy %.4f after %zu steps; held-out reward checkpoint 1 %.3f -> checkpoint 10 %.3f "
                "(%zu dead-end decodes); %.0f s",
                acc, steps, curve.front(), curve.back(), dead, dt);
  return {acc > 0.99 && steps <= 500 && curve.size() == 10 && curve.back() > curve.front() && dt < 1800, buf};
}

Verdict hoeffding_coverage() {
  const auto t0 = Clock::now();
  const std::size_t K = 1024;
  const double delta = 0.05;
  const double hw = hoeffding_half_width(K, delta);
  std::size_t covered = 0;
  const auto g = random_circuit(8, 2, 12, 5), f = random_circuit(8, 2, 12, 6);
  const TruthTable tf = eval_truth_table(f);
  const auto ge = eval_partial(state_with_target(encode_dfs(g), tf));
  const double exact = to_double(error_rate(eval_truth_table(g), tf));
  for (std::size_t trial = 0; trial < 1000; ++trial) {
    const auto s = sampled_error(ge, tf, K, Rng::derive(8, trial), delta);
    covered += std::abs(to_double(s.estimate) - exact) <= hw;
  }
  const double dt = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "exact ER %.4f, half-width %.4f, %zu/1000 covered, %.1f s", exact, hw, covered, dt);
  return {covered >= 950 && dt < 120, buf};
}

Verdict self_evolution() {
  const auto t0 = Clock::now();
  FinetuneSpec fs;
  fs.corpus = {4, 2, 10, 3, 40};
  fs.search.simulations = 16;
  fs.search.length_budget = 48;
  auto data = gen_finetune_dataset(30, 51, fs).data;
  EvolveConfig cfg;
  cfg.iterations = 3;
  cfg.sample_size = 24;
  cfg.train.adam.lr = 3e-3;
  cfg.train.batch = 8;
  cfg.train.epochs = 2;
  cfg.search.simulations = 16;
  cfg.search.length_budget = 48;
  const auto evalc = benchmark_corpus(40, 52, fs.corpus);
  for (std::size_t i = 0; i < evalc.size(); ++i) cfg.eval_set.push_back({evalc[i], sweep_set()[1 + i % 3]});
  auto mcfg = model::ModelConfig::micro(4);
  mcfg.d_model = 32;
  mcfg.n_heads = 4;
  mcfg.d_ff = 64;
  mcfg.max_len = 48;
  auto p = model::ModelParams::init(mcfg, 13);
  const auto reps = self_evolve(p, data, cfg, 3);
  const double dt = seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf, "eval mean gates %.3f after iteration 1, %.3f after iteration 3; %zu pairs added; %.0f s",
                reps.front().eval_mean_gates, reps.back().eval_mean_gates,
                reps[0].accepted + reps[1].accepted + reps[2].accepted, dt);
  return {reps.back().eval_mean_gates <= reps.front().eval_mean_gates, buf};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"round-trip fidelity", round_trip},
      {"masking soundness", masking_soundness},
      {"estimate soundness and monotonicity", estimate_soundness},
      {"oracle optimality at eps=0", oracle_optimality},
      {"approximation benefit", approximation_benefit},
      {"gradient correctness", gradient_correctness},
      {"training signal", training_signal},
      {"Hoeffding coverage", hoeffding_coverage},
      {"Pareto behavior", pareto_behavior},
      {"self-evolution direction", self_evolution},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Verdict v{false, ""};
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %d %s: %s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed ? 1 : 0;
}
