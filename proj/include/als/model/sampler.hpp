#pragma once

#include <algorithm>
#include <optional>

#include "als/model/training.hpp"
#include "als/reward.hpp"

namespace als::model {

struct SampleOptions {
  SampleMode mode = SampleMode::Stochastic;
  std::size_t length_budget = kDefaultMaxLen;
  unsigned max_backtracks = 16;
  unsigned max_restarts = 8;
  RewardConfig reward{};
  PatternSampling sampling{};
};

/// Feasible ids for the next token; only EOS once every tree is closed.
inline std::vector<std::uint32_t> feasible_ids(const PrefixState& st, const ErrorBound& bound, std::size_t budget) {
  const unsigned n = st.context().num_inputs();
  if (st.trees_complete()) return {Token::eos().id(n)};
  std::vector<std::uint32_t> ids;
  for (const auto& t : feasible_tokens(st, bound, budget)) ids.push_back(t.id(n));
  return ids;
}

/// Decodes one circuit for `target` under the masked policy. A step with no
/// feasible token undoes the previous choice and bans it there; after
/// max_backtracks undos the episode restarts from scratch.
inline Episode sample_episode(const ModelParams& p, const std::vector<Token>& source, const TruthTable& target,
                              const ErrorBound& eps, const SampleOptions& opt, Rng& rng) {
  const unsigned n = target.num_inputs();
  if (p.config().num_inputs != n) throw DimensionError("model and target differ in input count");
  const auto ctx = SequenceContext::make(n, target.num_outputs(), target, opt.sampling, opt.length_budget);
  const auto enc = encode_source(p, source, eps);
  const std::size_t budget = std::min(opt.length_budget, p.config().max_len);

  for (unsigned restart = 0; restart <= opt.max_restarts; ++restart) {
    Episode ep{source, eps, {}, {}, {}, true};
    std::vector<std::vector<std::uint32_t>> banned(1);
    PrefixState st(ctx);
    DecoderSession dec(p, enc);
    unsigned backtracks = 0;
    bool restart_needed = false;
    while (!st.finished()) {
      auto feas = feasible_ids(st, eps, budget);
      const auto& ban = banned.back();
      std::erase_if(feas, [&](std::uint32_t id) { return std::find(ban.begin(), ban.end(), id) != ban.end(); });
      if (feas.empty()) {
        if (ep.tokens.empty() || ++backtracks > opt.max_backtracks) {
          restart_needed = true;
          break;
        }
        const std::uint32_t undone = ep.tokens.back().id(n);
        ep.tokens.pop_back();
        ep.feasible.pop_back();
        ep.rewards.pop_back();
        banned.pop_back();
        banned.back().push_back(undone);
        st = PrefixState(ctx);
        dec = DecoderSession(p, enc);
        for (const auto& t : ep.tokens) {
          st.push(t);
          dec.push(t);
        }
        continue;
      }
      const Vec dist = masked_distribution(dec.logits(), feas);
      const Token t = Token::from_id(sample_token(dist, opt.mode, rng), n);
      const StepInfo info = st.push(t);
      ep.tokens.push_back(t);
      ep.feasible.push_back(std::move(feas));
      ep.rewards.push_back(reward_of_step(info, st, eps, opt.reward));
      banned.emplace_back();
      if (!st.finished()) dec.push(t);
    }
    if (!restart_needed) return ep;
  }
  throw DeadEndError("no feasible completion within the length budget");
}

/// Greedy decode; returns the circuit and its episode.
inline std::pair<Circuit, Episode> greedy_decode(const ModelParams& p, const std::vector<Token>& source,
                                                 const TruthTable& target, const ErrorBound& eps,
                                                 SampleOptions opt = {}) {
  opt.mode = SampleMode::Greedy;
  Rng rng(0);
  Episode ep = sample_episode(p, source, target, eps, opt, rng);
  return {decode_with_merge({target.num_inputs(), target.num_outputs(), ep.tokens}), std::move(ep)};
}

}  // namespace als::model
