#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "als/model/transformer.hpp"
#include "als/truth_table.hpp"

namespace als::model {

/// An exact circuit and a circuit that realizes it within `epsilon`.
struct TrainingPair {
  TokenSequence source;
  TokenSequence target;
  ErrorBound epsilon;
  TruthTable target_function;
  std::string provenance = "random";
  bool validation = false;
};

// ---------------------------------------------------------------------------
// Decoding distribution

/// Softmax restricted to `feasible` (token ids); other entries are exactly 0.
inline Vec masked_distribution(const RowVec& z, const std::vector<std::uint32_t>& feasible) {
  if (feasible.empty()) throw DeadEndError("no feasible token");
  Vec p = Vec::Zero(z.size());
  double m = -std::numeric_limits<double>::infinity();
  for (auto id : feasible) m = std::max(m, z(id));
  double sum = 0;
  for (auto id : feasible) sum += (p(id) = std::exp(z(id) - m));
  for (auto id : feasible) p(id) /= sum;
  return p;
}

inline Vec softmax(const RowVec& z) {
  Vec p = (z.array() - z.maxCoeff()).exp().transpose();
  return p / p.sum();
}

enum class SampleMode { Greedy, Stochastic };

/// Greedy takes the lowest-index maximum; stochastic draws by inversion.
inline std::uint32_t sample_token(const Vec& dist, SampleMode mode, Rng& rng) {
  if (mode == SampleMode::Greedy) {
    long best = 0;
    for (long i = 1; i < dist.size(); ++i)
      if (dist(i) > dist(best)) best = i;
    return static_cast<std::uint32_t>(best);
  }
  const double u = rng.uniform_real();
  double acc = 0;
  long last = -1;
  for (long i = 0; i < dist.size(); ++i) {
    if (dist(i) <= 0) continue;
    acc += dist(i);
    last = i;
    if (u < acc) return static_cast<std::uint32_t>(i);
  }
  if (last < 0) throw ContractError("empty distribution");
  return static_cast<std::uint32_t>(last);
}

inline std::uint32_t sample_token(const Vec& dist, SampleMode mode, std::uint64_t seed) {
  Rng rng(seed);
  return sample_token(dist, mode, rng);
}

inline std::vector<std::uint32_t> token_ids(const std::vector<Token>& ts, unsigned num_inputs) {
  std::vector<std::uint32_t> ids;
  ids.reserve(ts.size());
  for (const auto& t : ts) ids.push_back(t.id(num_inputs));
  return ids;
}

// ---------------------------------------------------------------------------
// Losses

struct LossAndGrad {
  double loss = 0;
  ModelParams grad;
  std::size_t tokens = 0;
  std::size_t correct = 0;  // argmax hits under teacher forcing

  double accuracy() const { return tokens ? static_cast<double>(correct) / static_cast<double>(tokens) : 0.0; }
};

/// Per-pair sum over target tokens of -log softmax, averaged over the batch.
inline LossAndGrad ce_loss_and_grad(const ModelParams& p, std::span<const TrainingPair> batch, bool want_grad = true) {
  LossAndGrad out{0, p.zeros_like(), 0, 0};
  if (batch.empty()) return out;
  const double scale = 1.0 / static_cast<double>(batch.size());
  const unsigned n = p.config().num_inputs;
  for (const auto& pair : batch) {
    const auto& tgt = pair.target.tokens;
    if (tgt.empty()) throw ContractError("empty target sequence");
    ForwardPass fp(p, pair.source.tokens, pair.epsilon, {tgt.begin(), tgt.end() - 1});
    const Mat& z = fp.logits();
    Mat dz(z.rows(), z.cols());
    for (long t = 0; t < z.rows(); ++t) {
      const std::uint32_t y = tgt[static_cast<std::size_t>(t)].id(n);
      const Vec prob = softmax(z.row(t));
      out.loss -= std::log(std::max(prob(y), std::numeric_limits<double>::min())) * scale;
      long arg = 0;
      z.row(t).maxCoeff(&arg);
      out.correct += static_cast<std::uint32_t>(arg) == y;
      ++out.tokens;
      dz.row(t) = prob.transpose() * scale;
      dz(t, y) -= scale;
    }
    if (want_grad) fp.backward(dz, out.grad);
  }
  return out;
}

/// One sampled episode: the decoded tokens, the feasible ids at every step
/// and the per-step rewards.
struct Episode {
  std::vector<Token> source;
  ErrorBound epsilon;
  std::vector<Token> tokens;
  std::vector<std::vector<std::uint32_t>> feasible;
  std::vector<double> rewards;
  bool complete = true;

  double total_reward() const {
    double s = 0;
    for (double r : rewards) s += r;
    return s;
  }
};

/// Episode return minus the mean return of the other episodes in the batch.
inline std::vector<double> leave_one_out_advantages(std::span<const Episode> eps) {
  std::vector<double> adv(eps.size(), 0.0);
  if (eps.size() < 2) {
    for (std::size_t i = 0; i < eps.size(); ++i) adv[i] = eps[i].total_reward();
    return adv;
  }
  double sum = 0;
  for (const auto& e : eps) sum += e.total_reward();
  const double k = static_cast<double>(eps.size() - 1);
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double r = eps[i].total_reward();
    adv[i] = r - (sum - r) / k;
  }
  return adv;
}

/// REINFORCE surrogate -1/B sum_e A_e sum_t log pi_masked(a_t).
inline LossAndGrad rl_loss_and_grad(const ModelParams& p, std::span<const Episode> episodes, bool want_grad = true) {
  LossAndGrad out{0, p.zeros_like(), 0, 0};
  if (episodes.empty()) return out;
  const auto adv = leave_one_out_advantages(episodes);
  const double scale = 1.0 / static_cast<double>(episodes.size());
  const unsigned n = p.config().num_inputs;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    if (ep.feasible.size() != ep.tokens.size()) throw ContractError("episode needs one feasible set per token");
    if (adv[e] == 0.0 || ep.tokens.empty()) continue;
    ForwardPass fp(p, ep.source, ep.epsilon, {ep.tokens.begin(), ep.tokens.end() - 1});
    const Mat& z = fp.logits();
    Mat dz = Mat::Zero(z.rows(), z.cols());
    const double w = adv[e] * scale;
    for (long t = 0; t < z.rows(); ++t) {
      const auto& feas = ep.feasible[static_cast<std::size_t>(t)];
      const std::uint32_t a = ep.tokens[static_cast<std::size_t>(t)].id(n);
      const Vec prob = masked_distribution(z.row(t), feas);
      out.loss -= w * std::log(prob(a));
      ++out.tokens;
      for (auto id : feas) dz(t, id) = w * prob(id);
      dz(t, a) -= w;
    }
    if (want_grad) fp.backward(dz, out.grad);
  }
  return out;
}

inline double total_loss(double ce, double rl, double lambda) {
  if (lambda < 0) throw ContractError("lambda must be non-negative");
  return ce + lambda * rl;
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamWHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
public:
  explicit AdamW(AdamWHyper h = {}) : h_(h) {}

  const AdamWHyper& hyper() const noexcept { return h_; }
  std::size_t steps() const noexcept { return t_; }

  /// Decoupled weight decay, bias-corrected moments. A non-finite gradient
  /// leaves params and state untouched and throws.
  void step(ModelParams& p, const ModelParams& g) {
    if (g.size() != p.size()) throw DimensionError("gradient shape differs from params");
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i])) throw DivergenceError("non-finite gradient at coordinate " + std::to_string(i));
    if (m_.size() != p.size()) {
      m_.assign(p.size(), 0.0);
      v_.assign(p.size(), 0.0);
    }
    ++t_;
    const double c1 = 1.0 - std::pow(h_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(h_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[i] = h_.beta1 * m_[i] + (1 - h_.beta1) * g[i];
      v_[i] = h_.beta2 * v_[i] + (1 - h_.beta2) * g[i] * g[i];
      p[i] -= h_.lr * h_.weight_decay * p[i];
      p[i] -= h_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + h_.eps);
    }
    if (!p.all_finite()) throw DivergenceError("parameters became non-finite");
  }

private:
  AdamWHyper h_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace als::model
