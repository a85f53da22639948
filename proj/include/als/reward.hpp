#pragma once

#include <algorithm>

#include "als/approx_check.hpp"
#include "als/sequence.hpp"

namespace als {

struct RewardConfig {
  double alpha = 1.0;
  double beta = 10.0;
  double delta = 1.0;  // credit per merged node
};

/// Definite error fraction of a prefix against its target.
inline double estimated_error(const PrefixState& st) {
  return static_cast<double>(st.mismatch_count()) / static_cast<double>(st.context().num_eval_patterns());
}

/// Reward of a step already applied to `after`. Gate tokens cost one; every
/// node completed by the step whose function already existed earns delta.
/// Exceeding the bound is charged by the hinge on the definite error.
inline double reward_of_step(const StepInfo& info, const PrefixState& after, const ErrorBound& bound,
                             const RewardConfig& cfg) {
  const double r_size = cfg.delta * info.merges - (info.gate_token ? 1.0 : 0.0);
  const double r_error = -std::max(0.0, estimated_error(after) - bound.value());
  return cfg.alpha * r_size + cfg.beta * r_error;
}

inline double step_reward(const PrefixState& prefix, Token next, const ErrorBound& bound, const RewardConfig& cfg) {
  PrefixState after = prefix;
  const StepInfo info = after.push(next);
  return reward_of_step(info, after, bound, cfg);
}

}  // namespace als
