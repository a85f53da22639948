#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <functional>
#include <optional>
#include <unordered_map>
#include <vector>

#include "als/approx_check.hpp"
#include "als/circuit.hpp"

namespace als::pipeline {

struct OracleResult {
  std::optional<std::size_t> min_gates;  // empty: unknown above max_gates
  Circuit witness{1, 1};
  std::size_t states_explored = 0;
};

namespace detail {

/// Set of gate functions over at most 3 inputs (8-bit truth tables).
struct FnSet {
  std::array<std::uint64_t, 4> w{};
  bool has(unsigned f) const { return (w[f >> 6] >> (f & 63)) & 1u; }
  void add(unsigned f) { w[f >> 6] |= std::uint64_t{1} << (f & 63); }
  friend bool operator==(const FnSet& a, const FnSet& b) { return a.w == b.w; }
};

struct FnSetHash {
  std::size_t operator()(const FnSet& s) const noexcept {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (auto x : s.w) h = (h ^ x) * 0xbf58476d1ce4e5b9ULL;
    return static_cast<std::size_t>(h ^ (h >> 31));
  }
};

struct GateStep {
  GateKind kind;
  unsigned a, b, out;
};

struct Parent {
  FnSet prev;
  GateStep step;
};

}  // namespace detail

/// Smallest number of AND/NAND gates over literals realizing `target` within
/// `bound`, by breadth-first enumeration of sets of gate functions.
inline OracleResult brute_force_oracle(const TruthTable& target, const ErrorBound& bound, unsigned max_gates) {
  using namespace detail;
  const unsigned n = target.num_inputs();
  const unsigned m = target.num_outputs();
  if (n > 3 || max_gates > 5) throw CapacityError("oracle budget is num_inputs <= 3 and max_gates <= 5");
  const unsigned P = 1u << n;
  const unsigned full = (1u << P) - 1;
  const std::size_t allowed = bound.max_mismatches(P);

  std::vector<unsigned> f(m);
  for (unsigned j = 0; j < m; ++j)
    for (unsigned p = 0; p < P; ++p) f[j] |= static_cast<unsigned>(target.bit(j, p)) << p;

  struct Leaf {
    unsigned fn;
    NodeRef ref;
  };
  std::vector<Leaf> leaves{{0u, NodeRef::constant(false)}, {full, NodeRef::constant(true)}};
  for (unsigned i = 0; i < n; ++i) {
    unsigned v = 0;
    for (unsigned p = 0; p < P; ++p) v |= ((p >> i) & 1u) << p;
    leaves.push_back({v, NodeRef::input(i)});
    leaves.push_back({full & ~v, NodeRef::input(i, true)});
  }
  auto is_leaf = [&](unsigned fn) {
    for (const auto& l : leaves)
      if (l.fn == fn) return true;
    return false;
  };

  auto functions_of = [&](const FnSet& s) {
    std::vector<unsigned> fs;
    for (const auto& l : leaves) fs.push_back(l.fn);
    for (unsigned x = 0; x <= full; ++x)
      if (s.has(x)) fs.push_back(x);
    return fs;
  };

  // Output assignment minimizing patterns where any output is wrong.
  auto satisfied = [&](const FnSet& s, std::vector<unsigned>* choice) {
    const auto fs = functions_of(s);
    std::vector<unsigned> pick(m);
    std::function<bool(unsigned, unsigned)> go = [&](unsigned j, unsigned bad) -> bool {
      if (static_cast<std::size_t>(std::popcount(bad)) > allowed) return false;
      if (j == m) return true;
      for (unsigned g : fs) {
        pick[j] = g;
        if (go(j + 1, bad | ((g ^ f[j]) & full))) return true;
      }
      return false;
    };
    const bool ok = go(0, 0);
    if (ok && choice) *choice = pick;
    return ok;
  };

  OracleResult res;
  auto build = [&](const std::vector<GateStep>& steps, const std::vector<unsigned>& outs) {
    Circuit c(n, m);
    std::unordered_map<unsigned, NodeRef> ref;
    for (const auto& l : leaves) ref.emplace(l.fn, l.ref);
    for (const auto& s : steps) ref[s.out] = c.add_gate(s.kind, ref.at(s.a), ref.at(s.b));
    for (unsigned j = 0; j < m; ++j) c.set_output(j, ref.at(outs[j]));
    return remove_dangling(c);
  };

  std::vector<unsigned> outs;
  if (satisfied(FnSet{}, &outs)) {
    res.min_gates = 0;
    res.witness = build({}, outs);
    return res;
  }

  std::vector<std::unordered_map<FnSet, Parent, FnSetHash>> levels(1);
  levels[0].emplace(FnSet{}, Parent{});
  auto trace = [&](std::size_t level, FnSet s, GateStep last) {
    std::vector<GateStep> steps{last};
    for (std::size_t l = level; l > 0; --l) {
      const auto& par = levels[l].at(s);
      steps.push_back(par.step);
      s = par.prev;
    }
    std::reverse(steps.begin(), steps.end());
    return steps;
  };

  for (unsigned k = 1; k <= max_gates; ++k) {
    const bool store = k < max_gates;
    if (store) levels.emplace_back();
    for (const auto& [s, par] : levels[k - 1]) {
      const auto fs = functions_of(s);
      for (std::size_t i = 0; i < fs.size(); ++i)
        for (std::size_t j = i; j < fs.size(); ++j) {
          const unsigned a = fs[i] & fs[j];
          for (GateKind kind : {GateKind::And, GateKind::Nand}) {
            const unsigned g = kind == GateKind::And ? a : (full & ~a);
            if (is_leaf(g) || s.has(g)) continue;
            FnSet next = s;
            next.add(g);
            ++res.states_explored;
            if (store && levels[k].count(next)) continue;
            const GateStep step{kind, fs[i], fs[j], g};
            if (satisfied(next, &outs)) {
              res.min_gates = k;
              res.witness = build(trace(k - 1, s, step), outs);
              return res;
            }
            if (store) levels[k].emplace(next, Parent{s, step});
          }
        }
    }
  }
  return res;
}

}  // namespace als::pipeline
