#pragma once

#include <vector>

#include "als/circuit.hpp"
#include "als/sequence.hpp"

namespace als::pipeline {

/// Random circuit whose outputs are the last gates. Each operand is a literal
/// with probability 1/2, else any earlier gate, so the logic stays deep.
inline Circuit deep_random_circuit(unsigned num_inputs, unsigned num_outputs, unsigned num_gates, std::uint64_t seed) {
  if (num_gates < num_outputs) throw ContractError("need at least one gate per output");
  Rng rng(seed);
  Circuit c(num_inputs, num_outputs);
  auto operand = [&](unsigned g) {
    if (g == 0 || rng.uniform(2) == 0) {
      const auto k = rng.uniform(2ull * num_inputs);
      return NodeRef::input(static_cast<std::uint32_t>(k / 2), (k & 1u) != 0);
    }
    return NodeRef::gate(static_cast<std::uint32_t>(rng.uniform(g)));
  };
  for (unsigned g = 0; g < num_gates; ++g) {
    const GateKind kind = rng.uniform(2) ? GateKind::And : GateKind::Nand;
    const NodeRef a = operand(g);
    const NodeRef b = operand(g);
    c.add_gate(kind, a, b);
  }
  for (unsigned j = 0; j < num_outputs; ++j) c.set_output(j, NodeRef::gate(num_gates - 1 - j));
  return c;
}

struct CorpusSpec {
  unsigned num_inputs = 8;
  unsigned num_outputs = 2;
  unsigned raw_gates = 12;
  std::size_t min_gates = 4;    // after simplify_exact
  std::size_t max_tokens = 100;  // encoded length of the simplified circuit
};

/// Fixed evaluation corpus: simplified deep random circuits that are neither
/// trivial nor too long to encode. Same seed, same corpus.
inline std::vector<Circuit> benchmark_corpus(std::size_t count, std::uint64_t seed, const CorpusSpec& spec = {}) {
  std::vector<Circuit> out;
  for (std::uint64_t s = 0; out.size() < count; ++s) {
    if (s > 1000 * (count + 1)) throw ContractError("corpus spec admits too few circuits");
    Circuit c = simplify_exact(
        deep_random_circuit(spec.num_inputs, spec.num_outputs, spec.raw_gates, Rng::derive(seed, s)));
    if (gate_count(c) < spec.min_gates || unfolded_length(c) > spec.max_tokens) continue;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace als::pipeline
