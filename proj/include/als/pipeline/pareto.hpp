#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "als/mcts.hpp"

namespace als::pipeline {

struct ParetoPoint {
  ErrorBound epsilon;
  Rational measured_error = 0;
  std::size_t gate_count = 0;
  Circuit circuit;
};

/// One row per requested bound; `point` is empty when synthesis failed.
struct SweepEntry {
  ErrorBound epsilon;
  std::optional<ParetoPoint> point;
  std::string failure;
};

inline std::vector<ErrorBound> default_epsilons() {
  return {ErrorBound(), ErrorBound::parse("0.01"), ErrorBound::parse("0.05"), ErrorBound::parse("0.1")};
}

/// Synthesizes `source`'s function under each bound, keeping the smallest of
/// `restarts` independently seeded searches. Bounds must be ascending.
inline std::vector<SweepEntry> pareto_sweep(const model::ModelParams* p, const Circuit& source,
                                            const std::vector<ErrorBound>& epsilons, const SearchConfig& cfg,
                                            std::uint64_t seed, unsigned restarts = 1) {
  for (std::size_t i = 1; i < epsilons.size(); ++i)
    if (epsilons[i] < epsilons[i - 1]) throw ContractError("epsilons must be sorted ascending");
  if (restarts < 1) throw ContractError("restarts must be at least 1");
  const TruthTable f = eval_truth_table(source);
  const TokenSequence src = encode_dfs(source);
  std::vector<SweepEntry> out;
  for (const auto& eps : epsilons) {
    SweepEntry e{eps, std::nullopt, {}};
    for (unsigned k = 0; k < restarts; ++k) {
      try {
        const auto r = run_search(p, src, f, eps, cfg, Rng::derive(seed, k));
        if (!r.verified) throw VerificationError("search result exceeds its bound");
        if (!e.point || r.gate_count < e.point->gate_count) e.point = ParetoPoint{eps, r.error, r.gate_count, r.circuit};
      } catch (const SynthesisFailure& ex) {
        e.failure = ex.what();
      }
    }
    if (e.point) e.failure.clear();
    out.push_back(std::move(e));
  }
  return out;
}

/// a dominates b: strictly lower error and strictly fewer gates.
inline bool dominates(const ParetoPoint& a, const ParetoPoint& b) {
  return a.measured_error < b.measured_error && a.gate_count < b.gate_count;
}

/// Drops points dominated by another point, keeping input order.
inline std::vector<ParetoPoint> dominance_filter(const std::vector<ParetoPoint>& pts) {
  std::vector<ParetoPoint> out;
  for (const auto& a : pts) {
    bool dominated = false;
    for (const auto& b : pts) dominated = dominated || dominates(b, a);
    if (!dominated) out.push_back(a);
  }
  return out;
}

inline std::vector<ParetoPoint> sweep_points(const std::vector<SweepEntry>& sweep) {
  std::vector<ParetoPoint> pts;
  for (const auto& e : sweep)
    if (e.point) pts.push_back(*e.point);
  return pts;
}

inline std::string pareto_csv(const std::vector<ParetoPoint>& pts) {
  std::ostringstream os;
  os << "epsilon,measured_error,gate_count\n";
  for (const auto& p : pts) os << to_string(p.epsilon) << ',' << to_decimal(p.measured_error) << ',' << p.gate_count << '\n';
  return os.str();
}

}  // namespace als::pipeline
