// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "wit/autodiff/graph.hpp"
#include "wit/metrics/vocab.hpp"

namespace wit {

/// -sum_t log p(target_t) over non-PAD positions. One log-probability
/// vector per decode step; positions past the decoded steps must be PAD.
inline Var xent_loss(Graph& g, const std::vector<Var>& log_probs, const TokenSeq& target) {
  std::vector<Var> picked;
  for (std::size_t t = 0; t < target.size(); ++t) {
    if (target[t] == Vocabulary::kPad) continue;
    if (t >= log_probs.size())
      throw std::invalid_argument("xent_loss: target position " + std::to_string(t) + " has no decoded step");
    const std::size_t V = log_probs[t].size();
    if (target[t] >= V)
      throw std::out_of_range("xent_loss: token id " + std::to_string(target[t]) + " outside vocabulary of " +
                              std::to_string(V));
    picked.push_back(pick(log_probs[t], target[t]));
  }
  if (picked.empty()) return g.constant(Tensor::scalar(0.0));
  return scale(sum(concat(picked)), -1.0);
}

/// Refocusing reward: how much better step 2 fits the caption than step 1.
inline double reward(double xe_step1, double xe_step2) { return xe_step1 - xe_step2; }

inline constexpr double kAlphaClamp = 1e-8;

/// Indicator-switched reinforcement loss on the key-frame probability:
///   R_e > R_prev:  -|R_e - R_prev| log(alpha)      (descent raises alpha)
///   R_e < R_prev:  -|R_e - R_prev| log(1 - alpha)  (descent lowers alpha)
///   otherwise 0.
/// Both branches use the magnitude of the reward change, so a worse key frame
/// is pushed down; a signed weight on log(1 - alpha) would push it up instead.
/// The reward difference is a constant; only alpha carries gradient.
inline Var rl_loss_plus(Graph& g, double R_e, double R_prev, Var alpha_key) {
  if (alpha_key.size() != 1) throw ShapeError("rl_loss_plus: alpha_key must be a scalar");
  const double a = alpha_key.item();
  if (!(a >= 0.0 && a <= 1.0)) throw std::domain_error("rl_loss_plus: alpha_key outside (0,1): " + std::to_string(a));
  const double diff = R_e - R_prev;
  if (diff == 0.0) return g.constant(Tensor::scalar(0.0));
  Var alpha = alpha_key;
  if (a < kAlphaClamp || a > 1.0 - kAlphaClamp)
    alpha = g.constant(Tensor::scalar(std::clamp(a, kAlphaClamp, 1.0 - kAlphaClamp)));
  return diff > 0.0 ? scale(log(alpha), -diff) : scale(log(one_minus(alpha)), diff);
}

/// xe_step2 + xe_step1 + beta * rl.
inline Var combined_loss(Var xe1, Var xe2, Var rl, double beta) {
  if (beta < 0.0) throw std::invalid_argument("combined_loss: beta must be >= 0");
  return add(add(xe2, xe1), scale(rl, beta));
}

/// Self-critical policy-gradient loss: -(reward - baseline) sum_t log p(sampled_t).
inline Var scst_loss(Graph& g, const std::vector<Var>& log_probs, const TokenSeq& sampled, double advantage) {
  if (advantage == 0.0 || sampled.empty()) return g.constant(Tensor::scalar(0.0));
  if (sampled.size() > log_probs.size()) throw std::invalid_argument("scst_loss: more tokens than decoded steps");
  std::vector<Var> picked;
  for (std::size_t t = 0; t < sampled.size(); ++t) picked.push_back(pick(log_probs[t], sampled[t]));
  return scale(sum(concat(picked)), -advantage);
}

/// Previous-epoch refocusing reward per (video, caption), used as the moving
/// threshold of rl_loss_plus.
class RewardLedger {
 public:
  using Key = std::pair<std::string, std::size_t>;

  std::optional<double> get(const std::string& video, std::size_t caption) const {
    auto it = rewards_.find({video, caption});
    if (it == rewards_.end()) return std::nullopt;
    return it->second;
  }
  void set(const std::string& video, std::size_t caption, double r) { rewards_[{video, caption}] = r; }

  std::size_t size() const { return rewards_.size(); }
  bool empty() const { return rewards_.empty(); }
  std::size_t epoch() const { return epoch_; }
  void advance_epoch() { ++epoch_; }
  const std::map<Key, double>& entries() const { return rewards_; }

 private:
  std::map<Key, double> rewards_;
  std::size_t epoch_ = 0;
};

}  // namespace wit
