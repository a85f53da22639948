#pragma once

#include <functional>
#include <vector>

#include "als/model/sampler.hpp"
#include "als/pipeline/dataset.hpp"

namespace als::pipeline {

struct TrainHyper {
  model::AdamWHyper adam{};
  std::size_t batch = 16;
  unsigned epochs = 1;
  std::uint64_t seed = 0;
};

struct RlHyper {
  double lambda = 0.1;
  unsigned group = 4;  // episodes per pair, baseline is within the group
  model::SampleOptions sample{};
};

struct EpochReport {
  unsigned epoch = 0;
  double train_ce = 0;        // mean over batches
  double train_accuracy = 0;  // teacher-forced argmax hits
  double valid_ce = 0;        // per pair, NaN without a validation split
  double mean_episode_reward = 0;
  std::size_t steps = 0;
};

/// Called after every optimizer step with the running step count.
using StepHook = std::function<void(std::size_t, const model::ModelParams&)>;
using EpochHook = std::function<void(const EpochReport&)>;

inline double validation_ce(const model::ModelParams& p, const std::vector<TrainingPair>& valid) {
  if (valid.empty()) return std::numeric_limits<double>::quiet_NaN();
  return model::ce_loss_and_grad(p, valid, false).loss;
}

namespace detail {

inline std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform(i)]);
  return idx;
}

/// Shared epoch loop. `rl` may be null; the CE path and its batch order do
/// not depend on it, so a null or zero-weight RL term gives the same run.
inline std::vector<EpochReport> run_epochs(model::ModelParams& p, const std::vector<TrainingPair>& train,
                                           const std::vector<TrainingPair>& valid, const TrainHyper& h,
                                           const RlHyper* rl, const EpochHook& on_epoch, const StepHook& on_step) {
  if (train.empty()) throw ContractError("empty training split");
  if (h.batch < 1) throw ContractError("batch must be at least 1");
  model::AdamW opt(h.adam);
  Rng rl_rng(Rng::derive(h.seed, 0x5eed));
  std::vector<EpochReport> reports;
  for (unsigned ep = 0; ep < h.epochs; ++ep) {
    EpochReport rep{ep + 1};
    const auto order = shuffled(train.size(), Rng::derive(h.seed, ep));
    std::size_t batches = 0, tokens = 0, correct = 0, episodes = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += h.batch) {
      std::vector<TrainingPair> batch;
      for (std::size_t i = lo; i < std::min(order.size(), lo + h.batch); ++i) batch.push_back(train[order[i]]);
      auto ce = model::ce_loss_and_grad(p, batch);
      if (!std::isfinite(ce.loss)) throw DivergenceError("non-finite CE loss");
      rep.train_ce += ce.loss;
      tokens += ce.tokens;
      correct += ce.correct;
      if (rl && rl->lambda > 0) {
        model::ModelParams g = p.zeros_like();
        for (const auto& pair : batch) {
          std::vector<model::Episode> group;
          try {
            for (unsigned k = 0; k < rl->group; ++k)
              group.push_back(model::sample_episode(p, pair.source.tokens, pair.target_function, pair.epsilon,
                                                    rl->sample, rl_rng));
          } catch (const DeadEndError&) {
            continue;  // no RL signal from this pair
          }
          for (const auto& e : group) rep.mean_episode_reward += e.total_reward();
          episodes += group.size();
          g += model::rl_loss_and_grad(p, group).grad;
        }
        g *= rl->lambda / static_cast<double>(batch.size());
        ce.grad += g;
      }
      opt.step(p, ce.grad);
      ++batches;
      if (on_step) on_step(opt.steps(), p);
    }
    rep.train_ce /= static_cast<double>(batches);
    rep.train_accuracy = tokens ? static_cast<double>(correct) / static_cast<double>(tokens) : 0.0;
    if (episodes) rep.mean_episode_reward /= static_cast<double>(episodes);
    rep.valid_ce = validation_ce(p, valid);
    rep.steps = opt.steps();
    reports.push_back(rep);
    if (on_epoch) on_epoch(rep);
  }
  return reports;
}

}  // namespace detail

/// Teacher-forced CE with AdamW. Validation CE is reported after each epoch.
inline std::vector<EpochReport> train_supervised(model::ModelParams& p, const std::vector<TrainingPair>& train,
                                                 const std::vector<TrainingPair>& valid, const TrainHyper& h,
                                                 const EpochHook& on_epoch = {}, const StepHook& on_step = {}) {
  return detail::run_epochs(p, train, valid, h, nullptr, on_epoch, on_step);
}

/// Minimizes CE + lambda * RL, the RL term from masked episodes sampled for
/// each pair. Episode sampling draws from its own stream, so lambda = 0
/// reproduces train_supervised exactly.
inline std::vector<EpochReport> finetune_rl(model::ModelParams& p, const std::vector<TrainingPair>& train,
                                            const std::vector<TrainingPair>& valid, const TrainHyper& h,
                                            const RlHyper& rl, const EpochHook& on_epoch = {},
                                            const StepHook& on_step = {}) {
  if (rl.lambda < 0) throw ContractError("lambda must be non-negative");
  if (rl.group < 1) throw ContractError("group must be at least 1");
  return detail::run_epochs(p, train, valid, h, &rl, on_epoch, on_step);
}

/// Mean greedy-episode return over `pairs`. A decode that dead-ends scores
/// the floor -(budget - 1) / 2, the most gates a sequence of that length holds.
inline double mean_greedy_reward(const model::ModelParams& p, const std::vector<TrainingPair>& pairs,
                                 const model::SampleOptions& opt = {}, std::size_t* dead_ends = nullptr) {
  if (pairs.empty()) return 0;
  const double floor = -static_cast<double>(std::min(opt.length_budget, p.config().max_len) - 1) / 2;
  double s = 0;
  for (const auto& pair : pairs) {
    try {
      s += model::greedy_decode(p, pair.source.tokens, pair.target_function, pair.epsilon, opt).second.total_reward();
    } catch (const DeadEndError&) {
      s += floor * opt.reward.alpha;
      if (dead_ends) ++*dead_ends;
    }
  }
  return s / static_cast<double>(pairs.size());
}

}  // namespace als::pipeline
