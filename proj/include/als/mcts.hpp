#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "als/model/sampler.hpp"
#include "als/reward.hpp"

namespace als {

/// Uniform: uniform over the feasible set. Guided: half the time the feasible
/// literal adding the fewest mismatches, otherwise uniform. Policy: sampled
/// from the model.
enum class RolloutMode { Uniform, Guided, Policy };

struct SearchConfig {
  double c_puct = 1.0;
  unsigned simulations = 256;  // per emitted token
  RewardConfig reward{};
  std::size_t length_budget = kDefaultMaxLen;
  RolloutMode rollout = RolloutMode::Guided;
  PatternSampling sampling{};
  /// Return the source circuit when search ends up larger than it.
  bool fallback_to_source = false;
  /// Commit along the smallest episode seen so far when it extends the
  /// committed prefix; otherwise the most visited action.
  bool follow_incumbent = false;

  void validate() const {
    if (simulations < 1) throw ContractError("simulations must be at least 1");
    if (!(c_puct > 0)) throw ContractError("c_puct must be positive");
    if (length_budget < 2) throw ContractError("length budget too small");
  }
};

/// Statistics of one action out of a node.
struct Edge {
  Token action;
  double prior = 0;
  double value = 0;  // Q: cumulative return through this edge
  unsigned visits = 0;
  double reward = 0;  // immediate reward, valid once `reward_known`
  bool reward_known = false;
  bool dead = false;
  int child = -1;
};

struct SearchNode {
  int parent = -1;
  std::vector<Edge> edges;
  unsigned visits = 0;  // N(s) = 1 + sum of edge visits
  bool expanded = false;
  bool terminal = false;  // every output tree closed
  bool dead = false;      // no completion within the budget below here
};

inline double puct_score(const SearchNode& node, const Edge& e, double c) {
  const double q = e.value / std::max(1u, e.visits);
  return q + c * e.prior * std::sqrt(static_cast<double>(node.visits) / (1.0 + e.visits));
}

/// Adds the suffix sum of `rewards` from each edge's depth onward.
inline void backpropagate(std::vector<SearchNode>& tree, const std::vector<std::pair<int, int>>& path,
                          const std::vector<double>& rewards) {
  if (path.size() != rewards.size()) throw DimensionError("one reward per path edge");
  double suffix = 0;
  for (std::size_t i = path.size(); i-- > 0;) {
    suffix += rewards[i];
    auto& node = tree[static_cast<std::size_t>(path[i].first)];
    auto& e = node.edges[static_cast<std::size_t>(path[i].second)];
    e.value += suffix;
    ++e.visits;
    ++node.visits;
  }
}

struct SearchResult {
  Circuit circuit;
  TokenSequence tokens;
  double total_reward = 0;
  std::size_t gate_count = 0;
  Rational error = 0;
  bool verified = false;
  bool used_fallback = false;
  std::size_t simulations_run = 0;
  /// Best complete in-bound episode return after each simulation.
  std::vector<double> best_return_trace;
  std::size_t tree_nodes = 0;
  /// N(s) = 1 + sum_a N(a) held at every expanded non-terminal node.
  bool visit_counts_consistent = true;
};

namespace detail {

struct Candidate {
  std::vector<Token> tokens;
  double ret = -std::numeric_limits<double>::infinity();
  std::size_t gates = std::numeric_limits<std::size_t>::max();
};

class Searcher {
public:
  Searcher(const model::ModelParams* params, const TokenSequence& source, const TruthTable& target,
           const ErrorBound& bound, const SearchConfig& cfg, std::uint64_t seed)
      : params_(params), source_(source), bound_(bound), cfg_(clamped(cfg, params)), rng_(seed),
        ctx_(SequenceContext::make(target.num_inputs(), target.num_outputs(), target, cfg_.sampling,
                                   cfg_.length_budget)) {
    if (params_) {
      if (params_->config().num_inputs != target.num_inputs()) throw DimensionError("model/target input count differ");
      enc_ = model::encode_source(*params_, source.tokens, bound);
      root_dec_.emplace(*params_, enc_);
    }
  }

  SearchResult run() {
    PrefixState root_state(ctx_);
    std::vector<double> committed_rewards;
    tree_.assign(1, SearchNode{});
    int root = 0;
    bool stuck = false;
    while (!root_state.trees_complete()) {
      if (!tree_[root].expanded) expand(root, root_state);
      live_edges(root);
      if (tree_[root].dead) {
        stuck = true;
        break;
      }
      if (live_count_ > 1)
        for (unsigned s = 0; s < cfg_.simulations && !tree_[root].dead; ++s) simulate(root, root_state);
      if (tree_[root].dead) {
        stuck = true;
        break;
      }
      const auto pick = static_cast<std::size_t>(commit_choice(root, root_state));
      const StepInfo info = root_state.push(tree_[root].edges[pick].action);
      if (root_dec_ && !root_state.trees_complete() && root_state.length() < params_->config().max_len)
        root_dec_->push(tree_[root].edges[pick].action);
      committed_rewards.push_back(reward_of_step(info, root_state, bound_, cfg_.reward));
      if (tree_[root].edges[pick].child < 0) {
        const int child = new_node(root);
        tree_[root].edges[pick].child = child;
      }
      root = tree_[root].edges[pick].child;
    }
    if (!stuck) {
      const StepInfo info = root_state.push(Token::eos());
      committed_rewards.push_back(reward_of_step(info, root_state, bound_, cfg_.reward));
      double ret = 0;
      for (double r : committed_rewards) ret += r;
      consider({root_state.tokens(), ret, gate_count(root_state.to_circuit())}, true);
    }
    if (!have_best_) throw SynthesisFailure("no in-bound completion within the length budget; best prefix: " +
                                            tokens_to_text(root_state.tokens()));
    return finish();
  }

private:
  static SearchConfig clamped(SearchConfig cfg, const model::ModelParams* p) {
    if (p) cfg.length_budget = std::min(cfg.length_budget, p->config().max_len);
    return cfg;
  }

  int new_node(int parent) {
    tree_.push_back(SearchNode{});
    tree_.back().parent = parent;
    return static_cast<int>(tree_.size()) - 1;
  }

  std::vector<Token> feasible(const PrefixState& st) const { return feasible_tokens(st, bound_, cfg_.length_budget); }

  void expand(int id, const PrefixState& st) {
    SearchNode& node = tree_[static_cast<std::size_t>(id)];
    node.expanded = true;
    node.visits = std::max(node.visits, 1u);
    if (st.trees_complete()) {
      node.terminal = true;
      return;
    }
    const auto acts = feasible(st);
    if (acts.empty()) {
      node.dead = true;
      return;
    }
    std::vector<double> prior(acts.size(), 1.0 / static_cast<double>(acts.size()));
    if (params_) {
      const auto dist = model::masked_distribution(policy_logits(st), model::token_ids(acts, ctx_->num_inputs()));
      for (std::size_t i = 0; i < acts.size(); ++i) prior[i] = dist(acts[i].id(ctx_->num_inputs()));
    }
    for (std::size_t i = 0; i < acts.size(); ++i) node.edges.push_back(Edge{acts[i], prior[i]});
  }

  /// Decoder state for `st`, resumed from the committed prefix.
  model::DecoderSession session_for(const PrefixState& st) const {
    model::DecoderSession dec = *root_dec_;
    const auto& ts = st.tokens();
    for (std::size_t i = dec.consumed(); i < ts.size(); ++i) dec.push(ts[i]);
    return dec;
  }

  model::RowVec policy_logits(const PrefixState& st) const { return session_for(st).logits(); }

  void live_edges(int id) {
    live_count_ = 0;
    auto& node = tree_[static_cast<std::size_t>(id)];
    for (auto& e : node.edges) {
      if (e.child >= 0 && tree_[static_cast<std::size_t>(e.child)].dead) e.dead = true;
      live_count_ += !e.dead;
    }
    if (!node.terminal && node.expanded && live_count_ == 0) node.dead = true;
  }

  int most_visited(int id) const {
    const auto& node = tree_[static_cast<std::size_t>(id)];
    int best = -1;
    for (std::size_t i = 0; i < node.edges.size(); ++i) {
      const auto& e = node.edges[i];
      if (e.dead) continue;
      if (best < 0) {
        best = static_cast<int>(i);
        continue;
      }
      const auto& b = node.edges[static_cast<std::size_t>(best)];
      const double qe = e.visits ? e.value / e.visits : -std::numeric_limits<double>::infinity();
      const double qb = b.visits ? b.value / b.visits : -std::numeric_limits<double>::infinity();
      if (e.visits > b.visits || (e.visits == b.visits && qe > qb)) best = static_cast<int>(i);
    }
    return best;
  }

  int commit_choice(int id, const PrefixState& st) const {
    const auto& prefix = st.tokens();
    if (cfg_.follow_incumbent && have_best_ && best_.tokens.size() > prefix.size() &&
        std::equal(prefix.begin(), prefix.end(), best_.tokens.begin())) {
      const Token next = best_.tokens[prefix.size()];
      const auto& edges = tree_[static_cast<std::size_t>(id)].edges;
      for (std::size_t i = 0; i < edges.size(); ++i)
        if (edges[i].action == next && !edges[i].dead) return static_cast<int>(i);
    }
    return most_visited(id);
  }

  void mark_dead(int id) {
    while (id >= 0) {
      auto& node = tree_[static_cast<std::size_t>(id)];
      node.dead = true;
      const int parent = node.parent;
      if (parent < 0) return;
      live_edges(parent);
      if (!tree_[static_cast<std::size_t>(parent)].dead) return;
      id = parent;
    }
  }

  /// select -> expand -> rollout -> backpropagate from `root`.
  void simulate(int root, const PrefixState& root_state) {
    PrefixState st = root_state;
    std::vector<std::pair<int, int>> path;
    std::vector<double> rewards;
    int id = root;
    for (;;) {
      SearchNode& node = tree_[static_cast<std::size_t>(id)];
      if (!node.expanded) {
        expand(id, st);
        if (tree_[static_cast<std::size_t>(id)].dead) {
          mark_dead(id);
          return;  // not counted: nothing below here can finish
        }
        break;
      }
      if (node.terminal) break;
      int pick = -1;
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < node.edges.size(); ++i) {
        const auto& e = node.edges[i];
        if (e.dead) continue;
        const double s = puct_score(node, e, cfg_.c_puct);
        if (s > best) {
          best = s;
          pick = static_cast<int>(i);
        }
      }
      if (pick < 0) {
        mark_dead(id);
        return;
      }
      Edge& e = node.edges[static_cast<std::size_t>(pick)];
      const StepInfo info = st.push(e.action);
      if (!e.reward_known) {
        e.reward = reward_of_step(info, st, bound_, cfg_.reward);
        e.reward_known = true;
      }
      path.emplace_back(id, pick);
      rewards.push_back(e.reward);
      if (e.child < 0) {
        const int child = new_node(id);
        tree_[static_cast<std::size_t>(id)].edges[static_cast<std::size_t>(pick)].child = child;
      }
      id = tree_[static_cast<std::size_t>(id)].edges[static_cast<std::size_t>(pick)].child;
    }
    double tail = 0;
    const bool eligible = rollout(st, tail);
    double ret = tail;
    for (double r : rewards) ret += r;
    if (eligible) consider({st.tokens(), ret, gate_count(st.to_circuit())}, false);
    if (!rewards.empty()) {
      rewards.back() += tail;
      backpropagate(tree_, path, rewards);
    } else {
      ++tree_[static_cast<std::size_t>(id)].visits;
    }
    ++sims_;
    trace_.push_back(have_best_ ? best_by_return_.ret : -std::numeric_limits<double>::infinity());
  }

  /// Completes `st` to EOS. Returns false when the masked set ran empty and
  /// closure had to be forced (the episode may then exceed the bound).
  bool rollout(PrefixState& st, double& ret) {
    bool eligible = true;
    std::optional<model::DecoderSession> dec;
    if (params_ && cfg_.rollout == RolloutMode::Policy) {
      dec.emplace(session_for(st));
    }
    while (!st.finished()) {
      Token t;
      if (st.trees_complete()) {
        t = Token::eos();
      } else {
        const auto acts = eligible ? feasible(st) : std::vector<Token>{};
        if (acts.empty()) {
          eligible = false;
          t = closest_literal(st);
        } else if (dec) {
          const auto dist = model::masked_distribution(dec->logits(), model::token_ids(acts, ctx_->num_inputs()));
          t = Token::from_id(model::sample_token(dist, model::SampleMode::Stochastic, rng_), ctx_->num_inputs());
        } else if (cfg_.rollout == RolloutMode::Guided && rng_.uniform(2) == 0) {
          t = closest_feasible(st, acts);
        } else {
          t = acts[rng_.uniform(acts.size())];
        }
      }
      const StepInfo info = st.push(t);
      ret += reward_of_step(info, st, bound_, cfg_.reward);
      if (dec && !st.finished() && st.length() < params_->config().max_len) dec->push(t);
    }
    return eligible;
  }

  /// Feasible literal with the fewest mismatches after it, ties broken at
  /// random; any feasible token when no literal is.
  Token closest_feasible(const PrefixState& st, const std::vector<Token>& acts) {
    const auto counts = st.literal_mismatch_counts();
    const unsigned n = ctx_->num_inputs();
    std::vector<Token> best;
    std::size_t lo = std::numeric_limits<std::size_t>::max();
    for (const auto& t : acts) {
      if (!t.is_lit()) continue;
      const std::size_t c = counts[t.id(n)];
      if (c < lo) {
        lo = c;
        best.clear();
      }
      if (c == lo) best.push_back(t);
    }
    if (best.empty()) return acts[rng_.uniform(acts.size())];
    return best[rng_.uniform(best.size())];
  }

  Token closest_literal(const PrefixState& st) const {
    Token best = Token::lit(0);
    std::size_t best_count = std::numeric_limits<std::size_t>::max();
    for (std::uint32_t i = 0; i < ctx_->num_inputs(); ++i)
      for (bool neg : {false, true}) {
        const Token t = Token::lit(i, neg);
        const std::size_t c = st.mismatch_count_after(t);
        if (c < best_count) {
          best_count = c;
          best = t;
        }
      }
    return best;
  }

  void consider(Candidate c, bool committed) {
    if (!have_best_ || c.ret > best_by_return_.ret ||
        (c.ret == best_by_return_.ret && c.gates < best_by_return_.gates))
      best_by_return_ = c;
    if (!have_best_ || c.gates < best_.gates || (c.gates == best_.gates && committed)) best_ = std::move(c);
    have_best_ = true;
  }

  SearchResult finish() {
    SearchResult r;
    const auto& tt = ctx_->target();
    r.tokens = {tt.num_inputs(), tt.num_outputs(), best_.tokens};
    r.circuit = decode_with_merge(r.tokens);
    r.total_reward = best_.ret;
    r.gate_count = gate_count(r.circuit);
    if (cfg_.fallback_to_source) {
      const Circuit src = decode_with_merge(source_);
      if (eval_truth_table(src) == tt && gate_count(src) < r.gate_count) {
        r.circuit = src;
        r.tokens = encode_dfs(src);
        r.gate_count = gate_count(src);
        r.used_fallback = true;
      }
    }
    if (tt.num_inputs() <= kMaxExhaustiveInputs) {
      r.error = error_rate(eval_truth_table(r.circuit), tt);
      r.verified = r.error <= bound_.rational();
    }
    r.simulations_run = sims_;
    r.tree_nodes = tree_.size();
    for (const auto& node : tree_) {
      if (!node.expanded || node.terminal) continue;
      unsigned sum = 0;
      for (const auto& e : node.edges) sum += e.visits;
      if (node.visits != 1 + sum) r.visit_counts_consistent = false;
    }
    r.best_return_trace = std::move(trace_);
    return r;
  }

  const model::ModelParams* params_;
  TokenSequence source_;
  ErrorBound bound_;
  SearchConfig cfg_;
  Rng rng_;
  std::shared_ptr<const SequenceContext> ctx_;
  std::shared_ptr<const model::EncodedSource> enc_;
  std::optional<model::DecoderSession> root_dec_;
  std::vector<SearchNode> tree_;
  std::size_t live_count_ = 0;
  bool have_best_ = false;
  Candidate best_, best_by_return_;
  std::size_t sims_ = 0;
  std::vector<double> trace_;
};

}  // namespace detail

/// Per-token PUCT search. `params` may be null for uniform priors. The
/// returned circuit is the smallest in-bound episode seen, the committed
/// sequence winning ties.
inline SearchResult run_search(const model::ModelParams* params, const TokenSequence& source, const TruthTable& target,
                               const ErrorBound& bound, const SearchConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (source.num_inputs != target.num_inputs() || source.num_outputs != target.num_outputs())
    throw DimensionError("source and target differ in shape");
  return detail::Searcher(params, source, target, bound, cfg, seed).run();
}

}  // namespace als
