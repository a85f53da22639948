#pragma once

#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "als/mcts.hpp"
#include "als/pipeline/corpus.hpp"

namespace als::pipeline {

using model::TrainingPair;

struct Dataset {
  std::vector<TrainingPair> records;

  std::size_t size() const noexcept { return records.size(); }
  std::vector<TrainingPair> split(bool validation) const {
    std::vector<TrainingPair> out;
    for (const auto& r : records)
      if (r.validation == validation) out.push_back(r);
    return out;
  }
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must not
/// depend on scheduling; callers write into slot i only.
inline void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errs(jobs);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < jobs; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += jobs) fn(i);
        } catch (...) {
          errs[w] = std::current_exception();
        }
      });
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Verification and JSON-lines I/O

/// Source realizes the target function exactly and the target sequence
/// realizes it within epsilon. Throws VerificationError otherwise.
inline void verify_pair(const TrainingPair& p) {
  const TruthTable& f = p.target_function;
  if (eval_truth_table(decode_with_merge(p.source)) != f) throw VerificationError("source does not realize the target");
  const Rational er = error_rate(eval_truth_table(decode_with_merge(p.target)), f);
  if (er > p.epsilon.rational())
    throw VerificationError("target error " + to_string(er) + " exceeds " + to_string(p.epsilon));
}

inline nlohmann::json record_to_json(const TrainingPair& p) {
  return {{"num_inputs", p.source.num_inputs},
          {"num_outputs", p.source.num_outputs},
          {"source_tokens", tokens_to_text(p.source.tokens)},
          {"target_tokens", tokens_to_text(p.target.tokens)},
          {"epsilon", to_string(p.epsilon)},
          {"truth_table_hex", to_hex(p.target_function)},
          {"provenance", p.provenance},
          {"split", p.validation ? "validation" : "train"}};
}

inline TrainingPair record_from_json(const nlohmann::json& j) {
  TrainingPair p;
  const unsigned n = j.at("num_inputs").get<unsigned>();
  const unsigned m = j.at("num_outputs").get<unsigned>();
  p.source = {n, m, tokens_from_text(j.at("source_tokens").get<std::string>(), n)};
  p.target = {n, m, tokens_from_text(j.at("target_tokens").get<std::string>(), n)};
  p.epsilon = ErrorBound::parse(j.at("epsilon").get<std::string>());
  p.target_function = truth_table_from_hex(n, j.at("truth_table_hex").get<std::vector<std::string>>());
  if (p.target_function.num_outputs() != m) throw DimensionError("truth table output count differs");
  p.provenance = j.value("provenance", "random");
  p.validation = j.value("split", "train") == "validation";
  return p;
}

inline void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& r : d.records) out << record_to_json(r).dump() << '\n';
}

/// Parses and re-verifies every record; a bad line throws with its number.
inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  Dataset d;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (line.empty()) continue;
    try {
      d.records.push_back(record_from_json(nlohmann::json::parse(line)));
      verify_pair(d.records.back());
    } catch (const VerificationError& e) {
      throw VerificationError(path + ":" + std::to_string(no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ParseError(path + ": " + e.what(), no);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Generation

struct PretrainSpec {
  unsigned num_inputs = 8;
  unsigned num_outputs = 2;
  unsigned min_gates = 2;
  unsigned max_gates = 16;
  std::size_t max_tokens = kDefaultMaxLen - 1;  // leaves room for the epsilon token
  unsigned jobs = 1;
};

/// Pairs (random circuit, its exact simplification) at epsilon 0. Circuits
/// whose encoding exceeds max_tokens are redrawn.
inline Dataset gen_pretrain_dataset(std::size_t count, std::uint64_t seed, const PretrainSpec& spec = {}) {
  if (spec.min_gates > spec.max_gates) throw ContractError("min_gates above max_gates");
  Dataset d;
  d.records.resize(count);
  parallel_for(count, spec.jobs, [&](std::size_t i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      Rng rng(Rng::derive(Rng::derive(seed, i), attempt));
      const auto g = spec.min_gates + static_cast<unsigned>(rng.uniform(spec.max_gates - spec.min_gates + 1));
      const bool deep = rng.uniform(2) == 0 && g >= spec.num_outputs;
      const Circuit raw = deep ? deep_random_circuit(spec.num_inputs, spec.num_outputs, g, rng())
                               : random_circuit(spec.num_inputs, spec.num_outputs, g, rng());
      if (unfolded_length(raw) > spec.max_tokens) continue;
      const Circuit opt = simplify_exact(raw);
      if (unfolded_length(opt) > spec.max_tokens) continue;
      auto& r = d.records[i];
      r.source = encode_dfs(raw);
      r.target = encode_dfs(opt);
      r.epsilon = ErrorBound();
      r.target_function = eval_truth_table(raw);
      r.provenance = "exact-opt";
      r.validation = i % 10 == 9;
      return;
    }
  });
  return d;
}

struct FinetuneSpec {
  std::vector<ErrorBound> epsilons{ErrorBound::parse("0.01"), ErrorBound::parse("0.05"), ErrorBound::parse("0.1")};
  CorpusSpec corpus{};
  SearchConfig search{.simulations = 32};
  unsigned jobs = 1;
};

struct FinetuneData {
  Dataset data;
  std::size_t failures = 0;  // searches that threw or lost to the exact circuit
};

/// `count` records per epsilon: the exact simplification of a corpus circuit
/// as source, a masked uniform-prior search result as target. Kept only when
/// not larger than the source. Every tenth record is tagged validation.
inline FinetuneData gen_finetune_dataset(std::size_t count, std::uint64_t seed, const FinetuneSpec& spec = {}) {
  for (const auto& e : spec.epsilons)
    if (!(e == ErrorBound::parse("0.01") || e == ErrorBound::parse("0.05") || e == ErrorBound::parse("0.1")))
      throw ContractError("fine-tune bounds must be drawn from {0.01, 0.05, 0.1}");
  const std::size_t total = count * spec.epsilons.size();
  const auto sources = benchmark_corpus(total, seed, spec.corpus);
  std::vector<std::optional<TrainingPair>> slots(total);
  parallel_for(total, spec.jobs, [&](std::size_t i) {
    const ErrorBound eps = spec.epsilons[i / count];
    const Circuit& src = sources[i];
    const TruthTable f = eval_truth_table(src);
    try {
      const auto r = run_search(nullptr, encode_dfs(src), f, eps, spec.search, Rng::derive(seed ^ 0xf1, i));
      if (!r.verified || r.gate_count > gate_count(src)) return;
      slots[i] = TrainingPair{encode_dfs(src), r.tokens, eps, f, "self-generated", (i % count) % 10 == 9};
    } catch (const SynthesisFailure&) {
    }
  });
  FinetuneData out;
  for (auto& s : slots) {
    if (s)
      out.data.records.push_back(std::move(*s));
    else
      ++out.failures;
  }
  return out;
}

}  // namespace als::pipeline
