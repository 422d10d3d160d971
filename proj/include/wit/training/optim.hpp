// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "wit/autodiff/params.hpp"

namespace wit {

/// Rescales gradients so their global L2 norm is at most max_norm. Returns
/// the norm before clipping.
inline double clip_global_norm(GradBuffer& grads, double max_norm) {
  const double n = grads.global_norm();
  if (max_norm > 0.0 && n > max_norm) grads.scale(max_norm / n);
  return n;
}

enum class OptimizerKind { Sgd, Adam };

inline OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("unknown optimizer '" + s + "' (expected sgd or adam)");
}

/// Plain SGD or Adam over a ParamStore; `trainable` restricts updates.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, const ParamStore& store) : kind_(kind), lr_(lr) {
    if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
    trainable_.assign(store.size(), true);
    if (kind_ == OptimizerKind::Adam) {
      m_ = GradBuffer(store);
      v_ = GradBuffer(store);
    }
  }

  void restrict_to(const std::vector<ParamId>& ids) {
    std::fill(trainable_.begin(), trainable_.end(), false);
    for (auto id : ids) trainable_.at(id) = true;
  }

  bool trainable(ParamId id) const { return trainable_.at(id); }

  void step(ParamStore& store, const GradBuffer& grads) {
    ++t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (ParamId id = 0; id < store.size(); ++id) {
      if (!trainable_[id]) continue;
      auto& w = store.value(id).values();
      const auto& g = grads[id].values();
      if (kind_ == OptimizerKind::Sgd) {
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr_ * g[k];
      } else {
        auto& m = m_[id].values();
        auto& v = v_[id].values();
        for (std::size_t k = 0; k < w.size(); ++k) {
          m[k] = b1 * m[k] + (1.0 - b1) * g[k];
          v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
          w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
        }
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  OptimizerKind kind_;
  double lr_;
  std::vector<bool> trainable_;
  GradBuffer m_, v_;
  std::size_t t_ = 0;
};

}  // namespace wit
