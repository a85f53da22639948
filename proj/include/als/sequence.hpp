#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "als/bitvec.hpp"
#include "als/circuit.hpp"
#include "als/error.hpp"
#include "als/random.hpp"
#include "als/tokens.hpp"
#include "als/truth_table.hpp"

namespace als {

/// Default cap on generated sequence length, EOS included.
inline constexpr std::size_t kDefaultMaxLen = 128;

/// How errors are measured while decoding: over all 2^N patterns, or over K
/// patterns drawn uniformly with replacement.
struct PatternSampling {
  bool sampled = false;
  std::size_t samples = 1024;
  std::uint64_t seed = 0;
};

/// Input counts at or below this are always simulated exhaustively.
inline constexpr unsigned kExhaustiveThreshold = 10;

/// Immutable per-task data shared by every prefix of one decoding task: leaf
/// tables for functional merging (always exhaustive), leaf tables for error
/// estimation (exhaustive or sampled) and the optional target function.
class SequenceContext {
public:
  static std::shared_ptr<const SequenceContext> make(unsigned num_inputs, unsigned num_outputs,
                                                     std::optional<TruthTable> target = std::nullopt,
                                                     PatternSampling sampling = {},
                                                     std::size_t max_len = kDefaultMaxLen) {
    return std::shared_ptr<const SequenceContext>(
        new SequenceContext(num_inputs, num_outputs, std::move(target), sampling, max_len));
  }

  unsigned num_inputs() const noexcept { return num_inputs_; }
  unsigned num_outputs() const noexcept { return num_outputs_; }
  std::size_t max_len() const noexcept { return max_len_; }
  bool sampled() const noexcept { return sampled_; }

  const LeafTables& key_leaves() const noexcept { return key_leaves_; }
  const LeafTables& eval_leaves() const noexcept { return sampled_ ? eval_leaves_ : key_leaves_; }
  std::size_t num_eval_patterns() const noexcept { return eval_leaves().num_patterns(); }
  const std::vector<std::size_t>& sample_patterns() const noexcept { return sample_patterns_; }

  bool has_target() const noexcept { return target_.has_value(); }
  const TruthTable& target() const { return target_.value(); }
  /// Target output j restricted to the evaluation patterns.
  const BitVec& target_eval(unsigned j) const { return target_eval_.at(j); }

  struct LeafEntry {
    std::uint64_t hash;
    NodeRef ref;
  };
  const std::vector<LeafEntry>& leaf_entries() const noexcept { return leaf_entries_; }

private:
  SequenceContext(unsigned num_inputs, unsigned num_outputs, std::optional<TruthTable> target,
                  PatternSampling sampling, std::size_t max_len)
      : num_inputs_(num_inputs), num_outputs_(num_outputs), max_len_(max_len), target_(std::move(target)) {
    if (num_inputs < 1 || num_inputs > kMaxExhaustiveInputs)
      throw CapacityError("sequence decoding supports 1.." + std::to_string(kMaxExhaustiveInputs) + " inputs");
    if (num_outputs < 1) throw ContractError("at least one output required");
    if (target_ && (target_->num_inputs() != num_inputs || target_->num_outputs() != num_outputs))
      throw DimensionError("target shape does not match sequence interface");
    key_leaves_ = LeafTables::exhaustive(num_inputs);
    sampled_ = sampling.sampled && num_inputs > kExhaustiveThreshold;
    if (sampled_) {
      if (sampling.samples < 1) throw ContractError("sample count must be positive");
      Rng rng(sampling.seed);
      const std::size_t total = std::size_t{1} << num_inputs;
      for (std::size_t k = 0; k < sampling.samples; ++k) sample_patterns_.push_back(rng.uniform(total));
      std::vector<BitVec> proj(num_inputs, BitVec(sampling.samples));
      for (std::size_t k = 0; k < sampling.samples; ++k)
        for (unsigned i = 0; i < num_inputs; ++i)
          if ((sample_patterns_[k] >> i) & 1u) proj[i].set(k);
      eval_leaves_ = LeafTables(std::move(proj));
    }
    if (target_) {
      for (unsigned j = 0; j < num_outputs; ++j) {
        if (!sampled_) {
          target_eval_.push_back(target_->output(j));
        } else {
          BitVec t(sample_patterns_.size());
          for (std::size_t k = 0; k < sample_patterns_.size(); ++k) t.set(k, target_->bit(j, sample_patterns_[k]));
          target_eval_.push_back(std::move(t));
        }
      }
    }
    auto add_leaf = [&](NodeRef r) { leaf_entries_.push_back({key_leaves_.leaf(r).hash(), r}); };
    add_leaf(NodeRef::constant(false));
    add_leaf(NodeRef::constant(true));
    for (std::uint32_t i = 0; i < num_inputs; ++i) {
      add_leaf(NodeRef::input(i));
      add_leaf(NodeRef::input(i, true));
    }
  }

  unsigned num_inputs_;
  unsigned num_outputs_;
  std::size_t max_len_;
  bool sampled_ = false;
  LeafTables key_leaves_;
  LeafTables eval_leaves_;
  std::vector<std::size_t> sample_patterns_;
  std::optional<TruthTable> target_;
  std::vector<BitVec> target_eval_;
  std::vector<LeafEntry> leaf_entries_;
};

/// Value of one output under three-valued semantics: a pattern is 1 when its
/// bit is set in `ones`, 0 when set in `zeros`, and U otherwise.
struct TriVec {
  BitVec ones;
  BitVec zeros;

  static TriVec unknown(std::size_t n) { return {BitVec(n), BitVec(n)}; }
  static TriVec known(const BitVec& v) { return {v, ~v}; }
  BitVec determined() const { return ones | zeros; }
};

inline TriVec tri_gate(GateKind kind, const TriVec& a, const TriVec& b) {
  BitVec ones = a.ones & b.ones;
  BitVec zeros = a.zeros | b.zeros;
  if (kind == GateKind::Nand) std::swap(ones, zeros);
  return {std::move(ones), std::move(zeros)};
}

/// What happened when one token was appended.
struct StepInfo {
  bool gate_token = false;
  /// Completed nodes whose function already existed (leaf or earlier gate).
  unsigned merges = 0;
  unsigned new_gates = 0;
  bool output_completed = false;
};

/// Incremental parser for a token prefix. Tracks the open gates of the output
/// being built, materializes each gate once both operands are complete
/// (reusing any existing node with the same function), and keeps the
/// definite-mismatch mask of finished outputs against the target.
class PrefixState {
public:
  struct Frame {
    GateKind kind;
    bool has_left;
    NodeRef left;
  };

  explicit PrefixState(std::shared_ptr<const SequenceContext> ctx)
      : ctx_(std::move(ctx)), circuit_(ctx_->num_inputs(), ctx_->num_outputs()) {
    if (ctx_->has_target()) done_mismatch_ = BitVec(ctx_->num_eval_patterns());
  }

  const SequenceContext& context() const noexcept { return *ctx_; }
  const std::shared_ptr<const SequenceContext>& context_ptr() const noexcept { return ctx_; }
  const std::vector<Token>& tokens() const noexcept { return tokens_; }
  std::size_t length() const noexcept { return tokens_.size(); }
  const std::vector<Frame>& frames() const noexcept { return stack_; }
  unsigned completed_outputs() const noexcept { return done_outputs_; }
  /// All output trees are closed; only EOS may follow.
  bool trees_complete() const noexcept { return done_outputs_ == ctx_->num_outputs(); }
  bool finished() const noexcept { return finished_; }
  /// Gates materialized so far; outputs are valid for completed trees only.
  const Circuit& circuit() const noexcept { return circuit_; }

  /// Operand slots still to be filled (U placeholders).
  std::size_t pending_slots() const noexcept {
    if (trees_complete()) return 0;
    std::size_t open = 0;
    for (const auto& f : stack_) open += f.has_left ? 1 : 2;
    if (!stack_.empty()) open -= stack_.size() - 1;
    const std::size_t later = ctx_->num_outputs() - done_outputs_ - (stack_.empty() ? 0 : 1);
    return open + later;
  }

  /// Tokens still required to finish, EOS included.
  std::size_t min_tokens_to_finish() const noexcept { return finished_ ? 0 : pending_slots() + 1; }

  /// Whether `t` is legal here regardless of error or length.
  bool structurally_legal(Token t) const noexcept {
    if (finished_) return false;
    if (trees_complete()) return t.is_eos();
    if (t.is_eos()) return false;
    return !t.is_lit() || t.input < ctx_->num_inputs();
  }

  StepInfo push(Token t) {
    const std::size_t pos = tokens_.size();
    if (finished_) throw ParseError("token after EOS", pos);
    StepInfo info;
    if (trees_complete()) {
      if (!t.is_eos()) throw ParseError("expected EOS after the last output", pos);
      finished_ = true;
      tokens_.push_back(t);
      return info;
    }
    if (t.is_eos()) throw ParseError("EOS before all outputs are complete", pos);
    if (t.is_gate()) {
      stack_.push_back({t.gate_kind(), false, NodeRef{}});
      info.gate_token = true;
      tokens_.push_back(t);
      return info;
    }
    if (t.input >= ctx_->num_inputs()) throw ParseError("literal exceeds input count", pos);
    NodeRef v = NodeRef::input(t.input, t.negated);
    for (;;) {
      if (stack_.empty()) {
        close_output(v, info);
        break;
      }
      Frame& top = stack_.back();
      if (!top.has_left) {
        top.has_left = true;
        top.left = v;
        break;
      }
      const Frame f = top;
      stack_.pop_back();
      v = materialize(f.kind, f.left, v, info);
    }
    tokens_.push_back(t);
    return info;
  }

  /// Table of a completed reference over the merge (exhaustive) patterns.
  const BitVec& key_table(NodeRef r) const {
    return r.is_gate() ? key_tables_.at(r.index()) : ctx_->key_leaves().leaf(r);
  }
  /// Table of a completed reference over the evaluation patterns.
  const BitVec& eval_table(NodeRef r) const {
    if (!ctx_->sampled()) return key_table(r);
    return r.is_gate() ? eval_tables_.at(r.index()) : ctx_->eval_leaves().leaf(r);
  }

  /// Three-valued value of the output currently under construction.
  TriVec current_output_value() const {
    TriVec v = TriVec::unknown(ctx_->num_eval_patterns());
    return fold_frames(std::move(v), stack_.size());
  }

  /// Three-valued value of output j: exact for finished trees, partial for
  /// the tree being built, all-U for trees not started.
  TriVec output_value(unsigned j) const {
    if (j < done_outputs_) return TriVec::known(eval_table(circuit_.output(j)));
    if (j == done_outputs_ && !trees_complete()) return current_output_value();
    return TriVec::unknown(ctx_->num_eval_patterns());
  }

  /// Patterns where some output is determined and differs from the target.
  std::size_t mismatch_count() const {
    require_target();
    if (trees_complete() || stack_.empty()) return done_mismatch_.count();
    return (done_mismatch_ | tri_mismatch(current_output_value(), done_outputs_)).count();
  }

  /// mismatch_count() after appending `t`, without modifying the state.
  /// `t` must be structurally legal.
  std::size_t mismatch_count_after(Token t) const {
    require_target();
    if (t.is_gate() || t.is_eos()) return mismatch_count();
    const TriVec v = value_after_literal(ctx_->eval_leaves().leaf(NodeRef::input(t.input, t.negated)));
    return (done_mismatch_ | tri_mismatch(v, done_outputs_)).count();
  }

  /// mismatch_count_after() for every literal, indexed by token id. Each
  /// pattern is evaluated independently, so folding the all-0 and all-1
  /// inputs once gives every literal's outcome by per-pattern selection.
  std::vector<std::size_t> literal_mismatch_counts() const {
    require_target();
    const std::size_t n = ctx_->num_eval_patterns();
    const BitVec bad0 = done_mismatch_ | tri_mismatch(value_after_literal(BitVec(n, false)), done_outputs_);
    const BitVec bad1 = done_mismatch_ | tri_mismatch(value_after_literal(BitVec(n, true)), done_outputs_);
    std::vector<std::size_t> out;
    out.reserve(2 * ctx_->num_inputs());
    for (std::uint32_t i = 0; i < ctx_->num_inputs(); ++i)
      for (bool neg : {false, true}) {
        const BitVec& lit = ctx_->eval_leaves().leaf(NodeRef::input(i, neg));
        std::size_t c = 0;
        const auto l = lit.words(), b0 = bad0.words(), b1 = bad1.words();
        for (std::size_t w = 0; w < l.size(); ++w) c += static_cast<std::size_t>(std::popcount((l[w] & b1[w]) | (~l[w] & b0[w])));
        out.push_back(c);
      }
    return out;
  }

  /// Decoded circuit; valid once finished().
  Circuit to_circuit() const { return remove_dangling(circuit_); }

private:
  void require_target() const {
    if (!ctx_->has_target()) throw ContractError("mismatch accounting needs a target function");
  }

  /// Three-valued value of the current output once a literal with table
  /// `lit` is appended.
  TriVec value_after_literal(const BitVec& lit) const {
    BitVec v = lit;
    std::size_t depth = stack_.size();
    // Fold upward through frames whose left operand is complete.
    while (depth > 0 && stack_[depth - 1].has_left) {
      const Frame& f = stack_[depth - 1];
      v = apply_gate(f.kind, eval_table(f.left), v);
      --depth;
    }
    if (depth == 0) return TriVec::known(v);
    // The folded value lands in the left slot of frame depth-1.
    const Frame& f = stack_[depth - 1];
    return fold_frames(tri_gate(f.kind, TriVec::known(v), TriVec::unknown(v.size())), depth - 1);
  }

  /// Folds `v` (value of the slot under frame `depth`) outward through frames [0, depth).
  TriVec fold_frames(TriVec v, std::size_t depth) const {
    for (std::size_t k = depth; k-- > 0;) {
      const Frame& f = stack_[k];
      if (f.has_left)
        v = tri_gate(f.kind, TriVec::known(eval_table(f.left)), v);
      else
        v = tri_gate(f.kind, v, TriVec::unknown(v.ones.size()));
    }
    return v;
  }

  BitVec tri_mismatch(const TriVec& v, unsigned output) const {
    const BitVec& f = ctx_->target_eval(output);
    return (v.ones & ~f) | (v.zeros & f);
  }

  NodeRef materialize(GateKind kind, NodeRef a, NodeRef b, StepInfo& info) {
    BitVec key = apply_gate(kind, key_table(a), key_table(b));
    const std::uint64_t h = key.hash();
    for (const auto& e : ctx_->leaf_entries())
      if (e.hash == h && ctx_->key_leaves().leaf(e.ref) == key) {
        ++info.merges;
        return e.ref;
      }
    for (std::size_t i = 0; i < key_hashes_.size(); ++i)
      if (key_hashes_[i] == h && key_tables_[i] == key) {
        ++info.merges;
        return NodeRef::gate(static_cast<std::uint32_t>(i));
      }
    if (ctx_->sampled()) eval_tables_.push_back(apply_gate(kind, eval_table(a), eval_table(b)));
    const NodeRef r = circuit_.add_gate(kind, a, b);
    key_tables_.push_back(std::move(key));
    key_hashes_.push_back(h);
    ++info.new_gates;
    return r;
  }

  void close_output(NodeRef v, StepInfo& info) {
    circuit_.set_output(done_outputs_, v);
    if (ctx_->has_target()) done_mismatch_ |= eval_table(v) ^ ctx_->target_eval(done_outputs_);
    ++done_outputs_;
    info.output_completed = true;
  }

  std::shared_ptr<const SequenceContext> ctx_;
  std::vector<Token> tokens_;
  std::vector<Frame> stack_;
  Circuit circuit_;
  std::vector<BitVec> key_tables_;
  std::vector<std::uint64_t> key_hashes_;
  std::vector<BitVec> eval_tables_;
  BitVec done_mismatch_;
  unsigned done_outputs_ = 0;
  bool finished_ = false;
};

using ParseState = PrefixState;

/// Parses a (possibly partial) sequence. Throws ParseError at the first
/// offending token.
inline PrefixState parse_state(const TokenSequence& prefix) {
  PrefixState st(SequenceContext::make(prefix.num_inputs, prefix.num_outputs, std::nullopt, {},
                                       std::max(kDefaultMaxLen, prefix.tokens.size() + 1)));
  for (const auto& t : prefix.tokens) st.push(t);
  return st;
}

/// Per-output preorder traversal from the primary outputs. Multi-fanout gates
/// are re-expanded at every visit; operands are visited left first.
inline TokenSequence encode_dfs(const Circuit& c, std::size_t max_tokens = std::size_t{1} << 24) {
  TokenSequence seq{c.num_inputs(), c.num_outputs(), {}};
  std::vector<NodeRef> todo;
  for (unsigned j = 0; j < c.num_outputs(); ++j) {
    todo.push_back(c.output(j));
    while (!todo.empty()) {
      const NodeRef r = todo.back();
      todo.pop_back();
      if (seq.tokens.size() >= max_tokens) throw CapacityError("unfolded sequence exceeds token cap");
      switch (r.kind()) {
        case NodeRef::Kind::Gate: {
          const auto& n = c.node(r.index());
          seq.tokens.push_back(Token::gate(n.kind));
          todo.push_back(n.right);
          todo.push_back(n.left);
          break;
        }
        case NodeRef::Kind::Input: seq.tokens.push_back(Token::lit(r.index(), r.negated())); break;
        case NodeRef::Kind::Const0:
        case NodeRef::Kind::Const1: {
          // No constant token: emit AND(x0, !x0) or NAND(x0, !x0).
          seq.tokens.push_back(Token::gate(r.constant_value() ? GateKind::Nand : GateKind::And));
          seq.tokens.push_back(Token::lit(0, false));
          seq.tokens.push_back(Token::lit(0, true));
          break;
        }
      }
    }
  }
  seq.tokens.push_back(Token::eos());
  return seq;
}

/// Number of tokens encode_dfs would emit (EOS included) without building it.
inline std::size_t unfolded_length(const Circuit& c) {
  std::vector<std::size_t> len(c.num_nodes());
  auto leaf_len = [&](NodeRef r) -> std::size_t {
    if (r.is_gate()) return len[r.index()];
    return r.is_constant() ? 3 : 1;
  };
  for (std::size_t i = 0; i < c.num_nodes(); ++i) {
    const auto& n = c.nodes()[i];
    len[i] = 1 + leaf_len(n.left) + leaf_len(n.right);
  }
  std::size_t total = 1;
  for (auto r : c.outputs()) total += leaf_len(r);
  return total;
}

/// Gate count of the tree obtained by unfolding every multi-fanout node.
inline std::size_t unfolded_gate_count(const Circuit& c) {
  std::vector<std::size_t> g(c.num_nodes());
  auto of = [&](NodeRef r) -> std::size_t { return r.is_gate() ? g[r.index()] : (r.is_constant() ? 1 : 0); };
  for (std::size_t i = 0; i < c.num_nodes(); ++i) g[i] = 1 + of(c.nodes()[i].left) + of(c.nodes()[i].right);
  std::size_t total = 0;
  for (auto r : c.outputs()) total += of(r);
  return total;
}

/// Rebuilds a DAG from a complete sequence, merging every node whose function
/// already exists. Throws ParseError on malformed or truncated input.
inline Circuit decode_with_merge(const TokenSequence& seq) {
  PrefixState st(SequenceContext::make(seq.num_inputs, seq.num_outputs, std::nullopt, {},
                                       std::max(kDefaultMaxLen, seq.tokens.size())));
  for (const auto& t : seq.tokens) st.push(t);
  if (!st.finished()) throw ParseError("sequence ends before completion", seq.tokens.size());
  return st.to_circuit();
}

}  // namespace als
