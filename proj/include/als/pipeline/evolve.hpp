#pragma once

#include <functional>
#include <vector>

#include "als/pipeline/training.hpp"

namespace als::pipeline {

/// An exact circuit to re-synthesize under a bound.
struct EvalTarget {
  Circuit source;
  ErrorBound epsilon;
};

/// Accepts a generated circuit for a record. Default: strictly fewer gates
/// than the record's current target and verified within its bound.
using FilterRule = std::function<bool(const TrainingPair&, const SearchResult&)>;

inline bool strict_improvement(const TrainingPair& in, const SearchResult& out) {
  return out.verified && out.gate_count < gate_count(decode_with_merge(in.target));
}

struct EvolveConfig {
  unsigned iterations = 3;
  std::size_t sample_size = 32;  // records re-synthesized per iteration
  TrainHyper train{};
  SearchConfig search{.simulations = 32};
  FilterRule filter = strict_improvement;
  std::vector<EvalTarget> eval_set;
};

struct IterationReport {
  unsigned iteration = 0;
  std::vector<EpochReport> train;
  std::size_t sampled = 0;
  std::size_t generated = 0;  // searches that returned a circuit
  std::size_t accepted = 0;
  std::size_t dataset_size = 0;
  double eval_mean_gates = std::numeric_limits<double>::quiet_NaN();
};

/// Mean gate count of policy-guided search over `targets`; a failed search
/// counts the source's own size.
inline double eval_mean_gates(const model::ModelParams* p, const std::vector<EvalTarget>& targets,
                              const SearchConfig& cfg, std::uint64_t seed) {
  if (targets.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    try {
      sum += static_cast<double>(
          run_search(p, encode_dfs(t.source), eval_truth_table(t.source), t.epsilon, cfg, Rng::derive(seed, i))
              .gate_count);
    } catch (const SynthesisFailure&) {
      sum += static_cast<double>(gate_count(t.source));
    }
  }
  return sum / static_cast<double>(targets.size());
}

/// Alternates a training phase on the current pairs with an improvement
/// phase that re-synthesizes a sample of them under the current policy and
/// appends the accepted results. The dataset only grows.
inline std::vector<IterationReport> self_evolve(model::ModelParams& p, Dataset& data, const EvolveConfig& cfg,
                                                std::uint64_t seed, const std::function<void(const IterationReport&)>& log = {}) {
  if (cfg.iterations < 1) throw ContractError("need at least one iteration");
  std::vector<IterationReport> out;
  for (unsigned it = 1; it <= cfg.iterations; ++it) {
    IterationReport rep;
    rep.iteration = it;
    TrainHyper h = cfg.train;
    h.seed = Rng::derive(cfg.train.seed, it);
    rep.train = train_supervised(p, data.split(false), data.split(true), h);

    const auto pick = detail::shuffled(data.size(), Rng::derive(seed, it));
    const std::size_t k = std::min(cfg.sample_size, data.size());
    std::vector<TrainingPair> fresh;
    for (std::size_t s = 0; s < k; ++s) {
      const TrainingPair& in = data.records[pick[s]];
      try {
        const auto r = run_search(&p, in.source, in.target_function, in.epsilon, cfg.search,
                                  Rng::derive(seed ^ 0xe7, it * 1000003 + s));
        ++rep.generated;
        if (cfg.filter(in, r))
          fresh.push_back(TrainingPair{in.source, r.tokens, in.epsilon, in.target_function, "self-generated",
                                       in.validation});
      } catch (const SynthesisFailure&) {
      } catch (const CapacityError&) {
      }
    }
    rep.sampled = k;
    rep.accepted = fresh.size();
    for (auto& f : fresh) data.records.push_back(std::move(f));
    rep.dataset_size = data.size();
    rep.eval_mean_gates = eval_mean_gates(&p, cfg.eval_set, cfg.search, seed);
    if (log) log(rep);
    out.push_back(std::move(rep));
  }
  return out;
}

}  // namespace als::pipeline
