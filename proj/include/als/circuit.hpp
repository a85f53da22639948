#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "als/bitvec.hpp"
#include "als/error.hpp"
#include "als/random.hpp"
#include "als/truth_table.hpp"

namespace als {

enum class GateKind : std::uint8_t { And, Nand };

inline const char* to_string(GateKind k) { return k == GateKind::And ? "AND" : "NAND"; }

struct Literal {
  std::uint32_t input_index = 0;
  bool negated = false;
  friend bool operator==(const Literal&, const Literal&) = default;
};

/// Operand or output reference: a constant, a possibly negated primary input,
/// or an earlier gate. Gate references carry no inversion.
class NodeRef {
public:
  enum class Kind : std::uint8_t { Const0, Const1, Input, Gate };

  constexpr NodeRef() = default;

  static constexpr NodeRef constant(bool value) { return NodeRef(value ? Kind::Const1 : Kind::Const0, 0, false); }
  static constexpr NodeRef input(std::uint32_t index, bool negated = false) {
    return NodeRef(Kind::Input, index, negated);
  }
  static constexpr NodeRef literal(Literal l) { return input(l.input_index, l.negated); }
  static constexpr NodeRef gate(std::uint32_t id) { return NodeRef(Kind::Gate, id, false); }

  constexpr Kind kind() const noexcept { return kind_; }
  constexpr bool is_gate() const noexcept { return kind_ == Kind::Gate; }
  constexpr bool is_input() const noexcept { return kind_ == Kind::Input; }
  constexpr bool is_constant() const noexcept { return kind_ == Kind::Const0 || kind_ == Kind::Const1; }
  constexpr bool constant_value() const noexcept { return kind_ == Kind::Const1; }
  constexpr std::uint32_t index() const noexcept { return index_; }
  constexpr bool negated() const noexcept { return negated_; }
  constexpr Literal as_literal() const noexcept { return {index_, negated_}; }

  /// Complement of a leaf (constant or literal). Undefined for gates.
  constexpr NodeRef complement() const noexcept {
    if (kind_ == Kind::Const0) return constant(true);
    if (kind_ == Kind::Const1) return constant(false);
    return input(index_, !negated_);
  }

  friend constexpr bool operator==(const NodeRef&, const NodeRef&) = default;

private:
  constexpr NodeRef(Kind k, std::uint32_t i, bool n) : kind_(k), negated_(n), index_(i) {}

  Kind kind_ = Kind::Const0;
  bool negated_ = false;
  std::uint32_t index_ = 0;
};

struct GateNode {
  GateKind kind = GateKind::And;
  NodeRef left;
  NodeRef right;
  friend bool operator==(const GateNode&, const GateNode&) = default;
};

/// DAG of two-input AND/NAND gates. Gates may only reference strictly earlier
/// gates, so every circuit built through this interface is acyclic.
class Circuit {
public:
  static constexpr unsigned kMaxInputs = 32;

  Circuit() = default;
  Circuit(unsigned num_inputs, unsigned num_outputs)
      : num_inputs_(num_inputs), outputs_(num_outputs, NodeRef::constant(false)) {
    if (num_inputs < 1 || num_inputs > kMaxInputs)
      throw ContractError("circuit input count must be in [1, " + std::to_string(kMaxInputs) + "]");
    if (num_outputs < 1) throw ContractError("circuit needs at least one output");
  }

  unsigned num_inputs() const noexcept { return num_inputs_; }
  unsigned num_outputs() const noexcept { return static_cast<unsigned>(outputs_.size()); }
  std::size_t num_nodes() const noexcept { return nodes_.size(); }
  const std::vector<GateNode>& nodes() const noexcept { return nodes_; }
  const GateNode& node(std::uint32_t id) const { return nodes_.at(id); }
  const std::vector<NodeRef>& outputs() const noexcept { return outputs_; }
  NodeRef output(unsigned j) const { return outputs_.at(j); }

  NodeRef add_gate(GateKind kind, NodeRef left, NodeRef right) {
    check_ref(left);
    check_ref(right);
    nodes_.push_back({kind, left, right});
    return NodeRef::gate(static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  void set_output(unsigned j, NodeRef ref) {
    check_ref(ref);
    outputs_.at(j) = ref;
  }

  friend bool operator==(const Circuit&, const Circuit&) = default;

private:
  void check_ref(NodeRef r) const {
    if (r.is_input() && r.index() >= num_inputs_)
      throw ContractError("literal x" + std::to_string(r.index()) + " out of range");
    if (r.is_gate() && r.index() >= nodes_.size())
      throw ContractError("gate n" + std::to_string(r.index()) + " is not defined yet");
  }

  unsigned num_inputs_ = 1;
  std::vector<GateNode> nodes_;
  std::vector<NodeRef> outputs_{NodeRef::constant(false)};
};

// ---------------------------------------------------------------------------
// Simulation

inline BitVec apply_gate(GateKind kind, const BitVec& a, const BitVec& b) {
  BitVec r = a & b;
  if (kind == GateKind::Nand) r.flip();
  return r;
}

/// Leaf tables (constants and literals) over a fixed pattern set.
class LeafTables {
public:
  LeafTables() = default;
  explicit LeafTables(std::vector<BitVec> projections) : proj_(std::move(projections)) {
    const std::size_t n = proj_.empty() ? 0 : proj_.front().size();
    const0_ = BitVec(n);
    const1_ = BitVec(n, true);
    neg_.reserve(proj_.size());
    for (const auto& p : proj_) neg_.push_back(~p);
  }
  static LeafTables exhaustive(unsigned num_inputs) {
    std::vector<BitVec> proj;
    for (unsigned i = 0; i < num_inputs; ++i) proj.push_back(input_projection(num_inputs, i));
    return LeafTables(std::move(proj));
  }

  std::size_t num_inputs() const noexcept { return proj_.size(); }
  std::size_t num_patterns() const noexcept { return const0_.size(); }

  const BitVec& leaf(NodeRef r) const {
    switch (r.kind()) {
      case NodeRef::Kind::Const0: return const0_;
      case NodeRef::Kind::Const1: return const1_;
      case NodeRef::Kind::Input: return r.negated() ? neg_.at(r.index()) : proj_.at(r.index());
      case NodeRef::Kind::Gate: break;
    }
    throw ContractError("gate reference is not a leaf");
  }

private:
  std::vector<BitVec> proj_;
  std::vector<BitVec> neg_;
  BitVec const0_;
  BitVec const1_;
};

/// Per-gate tables of `c` over the leaf pattern set.
inline std::vector<BitVec> simulate_nodes(const Circuit& c, const LeafTables& leaves) {
  std::vector<BitVec> tables;
  tables.reserve(c.num_nodes());
  auto table_of = [&](NodeRef r) -> const BitVec& { return r.is_gate() ? tables[r.index()] : leaves.leaf(r); };
  for (const auto& n : c.nodes()) tables.push_back(apply_gate(n.kind, table_of(n.left), table_of(n.right)));
  return tables;
}

inline std::vector<BitVec> simulate_outputs(const Circuit& c, const LeafTables& leaves) {
  const auto tables = simulate_nodes(c, leaves);
  std::vector<BitVec> outs;
  for (auto r : c.outputs()) outs.push_back(r.is_gate() ? tables[r.index()] : leaves.leaf(r));
  return outs;
}

/// Exact function of every output over all 2^N input patterns.
inline TruthTable eval_truth_table(const Circuit& c) {
  if (c.num_inputs() > kMaxExhaustiveInputs)
    throw CapacityError("exhaustive simulation supports at most " + std::to_string(kMaxExhaustiveInputs) +
                        " inputs, circuit has " + std::to_string(c.num_inputs()));
  return TruthTable(c.num_inputs(), simulate_outputs(c, LeafTables::exhaustive(c.num_inputs())));
}

// ---------------------------------------------------------------------------
// Structure

/// Marks gates reachable from the outputs.
inline std::vector<bool> reachable_gates(const Circuit& c) {
  std::vector<bool> live(c.num_nodes(), false);
  for (auto r : c.outputs())
    if (r.is_gate()) live[r.index()] = true;
  for (std::size_t i = c.num_nodes(); i-- > 0;) {
    if (!live[i]) continue;
    const auto& n = c.nodes()[i];
    if (n.left.is_gate()) live[n.left.index()] = true;
    if (n.right.is_gate()) live[n.right.index()] = true;
  }
  return live;
}

/// Gates reachable from some output. Leaves and input negations are free.
inline std::size_t gate_count(const Circuit& c) {
  std::size_t n = 0;
  for (bool b : reachable_gates(c)) n += b;
  return n;
}

/// Drops gates no output depends on, preserving relative order.
inline Circuit remove_dangling(const Circuit& c) {
  const auto live = reachable_gates(c);
  Circuit out(c.num_inputs(), c.num_outputs());
  std::vector<NodeRef> remap(c.num_nodes());
  auto map = [&](NodeRef r) { return r.is_gate() ? remap[r.index()] : r; };
  for (std::size_t i = 0; i < c.num_nodes(); ++i) {
    if (!live[i]) continue;
    const auto& n = c.nodes()[i];
    remap[i] = out.add_gate(n.kind, map(n.left), map(n.right));
  }
  for (unsigned j = 0; j < c.num_outputs(); ++j) out.set_output(j, map(c.output(j)));
  return out;
}

/// Function-keyed node table. Seeded with the constants and every literal so
/// that a gate equivalent to a leaf collapses onto the leaf.
class FunctionTable {
public:
  explicit FunctionTable(const LeafTables& leaves) {
    insert(leaves.leaf(NodeRef::constant(false)), NodeRef::constant(false));
    insert(leaves.leaf(NodeRef::constant(true)), NodeRef::constant(true));
    for (std::uint32_t i = 0; i < leaves.num_inputs(); ++i) {
      insert(leaves.leaf(NodeRef::input(i)), NodeRef::input(i));
      insert(leaves.leaf(NodeRef::input(i, true)), NodeRef::input(i, true));
    }
  }

  const NodeRef* find(const BitVec& f) const {
    auto it = map_.find(f);
    return it == map_.end() ? nullptr : &it->second;
  }
  void insert(const BitVec& f, NodeRef r) { map_.emplace(f, r); }

private:
  std::unordered_map<BitVec, NodeRef, BitVecHash> map_;
};

/// Functional hashing: rebuilds `c` so that no two gates, and no gate and
/// leaf, share a truth table. References to a duplicate are redirected to the
/// first node computing that function.
inline Circuit structural_merge(const Circuit& c) {
  if (c.num_inputs() > kMaxExhaustiveInputs)
    throw CapacityError("functional hashing needs exhaustive simulation");
  const auto leaves = LeafTables::exhaustive(c.num_inputs());
  const auto live = reachable_gates(c);
  FunctionTable seen(leaves);
  Circuit out(c.num_inputs(), c.num_outputs());
  std::vector<BitVec> new_tables;
  std::vector<NodeRef> remap(c.num_nodes());
  auto table_of = [&](NodeRef r) -> const BitVec& { return r.is_gate() ? new_tables[r.index()] : leaves.leaf(r); };
  for (std::size_t i = 0; i < c.num_nodes(); ++i) {
    if (!live[i]) continue;
    const auto& n = c.nodes()[i];
    const NodeRef a = n.left.is_gate() ? remap[n.left.index()] : n.left;
    const NodeRef b = n.right.is_gate() ? remap[n.right.index()] : n.right;
    BitVec f = apply_gate(n.kind, table_of(a), table_of(b));
    if (const NodeRef* hit = seen.find(f)) {
      remap[i] = *hit;
      continue;
    }
    remap[i] = out.add_gate(n.kind, a, b);
    seen.insert(f, remap[i]);
    new_tables.push_back(std::move(f));
  }
  for (unsigned j = 0; j < c.num_outputs(); ++j) {
    const NodeRef r = c.output(j);
    out.set_output(j, r.is_gate() ? remap[r.index()] : r);
  }
  // Redirection onto leaves can orphan earlier gates.
  return remove_dangling(out);
}

namespace detail {

/// One round of local rewrites: constant propagation, idempotence,
/// complement annihilation and NAND(g, g) -> complement of g.
inline Circuit local_rewrite(const Circuit& c) {
  Circuit out(c.num_inputs(), c.num_outputs());
  std::vector<NodeRef> remap(c.num_nodes());
  auto map = [&](NodeRef r) { return r.is_gate() ? remap[r.index()] : r; };
  for (std::size_t i = 0; i < c.num_nodes(); ++i) {
    const auto& n = c.nodes()[i];
    const NodeRef a = map(n.left);
    const NodeRef b = map(n.right);
    const bool nand = n.kind == GateKind::Nand;
    // Result of AND(a, b) when it reduces to a leaf or an existing node.
    std::optional<NodeRef> and_result;
    bool and_is_leaf = false;
    if ((a.is_constant() && !a.constant_value()) || (b.is_constant() && !b.constant_value())) {
      and_result = NodeRef::constant(false);
      and_is_leaf = true;
    } else if (a.is_constant()) {
      and_result = b;
      and_is_leaf = !b.is_gate();
    } else if (b.is_constant()) {
      and_result = a;
      and_is_leaf = !a.is_gate();
    } else if (a == b) {
      and_result = a;
      and_is_leaf = !a.is_gate();
    } else if (a.is_input() && b.is_input() && a.index() == b.index()) {
      and_result = NodeRef::constant(false);
      and_is_leaf = true;
    }
    if (!and_result) {
      remap[i] = out.add_gate(n.kind, a, b);
    } else if (!nand) {
      remap[i] = *and_result;
    } else if (and_is_leaf) {
      remap[i] = and_result->complement();
    } else {
      // NAND of a single gate g = op(p, q): flip g's kind.
      const auto& g = out.node(and_result->index());
      remap[i] = out.add_gate(g.kind == GateKind::And ? GateKind::Nand : GateKind::And, g.left, g.right);
    }
  }
  for (unsigned j = 0; j < c.num_outputs(); ++j) out.set_output(j, map(c.output(j)));
  return remove_dangling(out);
}

}  // namespace detail

/// Exact simplification: local rewrites plus functional hashing, iterated to
/// a fixpoint. The result is functionally equivalent and never larger.
inline Circuit simplify_exact(const Circuit& c) {
  Circuit cur = structural_merge(c);
  for (;;) {
    Circuit next = structural_merge(detail::local_rewrite(cur));
    if (next == cur) return cur;
    if (gate_count(next) > gate_count(cur)) return cur;
    cur = std::move(next);
  }
}

/// Random DAG: each gate picks a kind and two operands uniformly from the 2N
/// literals and the gates defined so far; outputs are drawn from the gates
/// (or the literals when there are none).
inline Circuit random_circuit(unsigned num_inputs, unsigned num_outputs, unsigned num_gates, std::uint64_t seed) {
  Rng rng(seed);
  Circuit c(num_inputs, num_outputs);
  auto draw_operand = [&](std::size_t gates_so_far) {
    const std::uint64_t k = rng.uniform(2ull * num_inputs + gates_so_far);
    if (k < 2ull * num_inputs) return NodeRef::input(static_cast<std::uint32_t>(k / 2), (k & 1u) != 0);
    return NodeRef::gate(static_cast<std::uint32_t>(k - 2ull * num_inputs));
  };
  for (unsigned g = 0; g < num_gates; ++g) {
    const GateKind kind = rng.uniform(2) == 0 ? GateKind::And : GateKind::Nand;
    const NodeRef a = draw_operand(g);
    const NodeRef b = draw_operand(g);
    c.add_gate(kind, a, b);
  }
  for (unsigned j = 0; j < num_outputs; ++j) {
    if (num_gates == 0) {
      const std::uint64_t k = rng.uniform(2ull * num_inputs);
      c.set_output(j, NodeRef::input(static_cast<std::uint32_t>(k / 2), (k & 1u) != 0));
    } else {
      c.set_output(j, NodeRef::gate(static_cast<std::uint32_t>(rng.uniform(num_gates))));
    }
  }
  return c;
}

}  // namespace als
