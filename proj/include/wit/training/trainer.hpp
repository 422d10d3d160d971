// SPDX-License-Identifier: Apache-2.0
//
// Training schedule:
//   phase A (epoch < pretrain_epochs): step 1 only, default key frame,
//     loss = xe1.
//   phase B: full two-step forward, loss = xe2 + xe1 + beta * L_R+, where
//     L_R+ uses the (video, caption) reward stored in the ledger during the
//     previous phase-B epoch. Pairs without a stored reward only seed it.
//   frozen key frames: step 2 encodes from a fixed per-video key frame and
//     L_R+ is disabled.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "wit/decoder/captioner.hpp"
#include "wit/training/evaluate.hpp"
#include "wit/training/losses.hpp"
#include "wit/training/optim.hpp"
#include "wit/video/dataset_io.hpp"

namespace wit {

struct TrainConfig {
  double learning_rate = 3e-4;
  std::size_t epochs = 45;
  std::size_t pretrain_epochs = 5;
  double beta = 0.03;
  double scheduled_sampling_p = 0.25;
  double dropout = 0.5;
  std::size_t max_len = Vocabulary::kDefaultMaxLen;
  std::uint64_t seed = 1;
  std::string optimizer = "sgd";
  double clip_norm = 5.0;
  std::size_t batch_size = 1;
  std::size_t workers = 1;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("train config: learning_rate must be >= 0");
    if (beta < 0.0) throw std::invalid_argument("train config: beta must be >= 0");
    if (scheduled_sampling_p < 0.0 || scheduled_sampling_p > 1.0)
      throw std::invalid_argument("train config: scheduled_sampling_p must lie in [0,1]");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("train config: dropout must lie in [0,1)");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (workers < 1) throw std::invalid_argument("train config: workers must be >= 1");
    optimizer_from_name(optimizer);
  }
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  char phase = 'A';
  double mean_xe1 = 0.0;
  double mean_xe2 = std::numeric_limits<double>::quiet_NaN();
  double mean_reward = std::numeric_limits<double>::quiet_NaN();
  double mean_alpha_key = std::numeric_limits<double>::quiet_NaN();
  double keyframe_inside_event_fraction = 0.0;
  double val_cider = std::numeric_limits<double>::quiet_NaN();
  std::size_t rl_applied = 0;  // pairs that received L_R+ this epoch
};

using TrainHistory = std::vector<EpochStats>;

struct TrainHooks {
  const std::vector<video::VideoSample>* validation = nullptr;
  const video::KeyFrameMap* key_overrides = nullptr;
  std::function<void(const EpochStats&, const Model&)> on_epoch_end;
};

struct TrainResult {
  TrainHistory history;
  std::optional<Model> best;  // highest validation CIDEr, phase-B epochs preferred
  std::size_t best_epoch = 0;
  double best_val_cider = -1.0;
};

/// Result of one (video, caption) forward/backward.
struct PairOutcome {
  double xe1 = 0.0;
  double xe2 = std::numeric_limits<double>::quiet_NaN();
  double reward = std::numeric_limits<double>::quiet_NaN();
  double alpha_key = std::numeric_limits<double>::quiet_NaN();
  std::size_t i_key = 0;
  bool rl_applied = false;
  double loss = 0.0;
};

struct PairContext {
  bool two_step = false;
  std::optional<std::size_t> key_override;
  std::optional<double> threshold;  // ledger R_{e-1}; absent means seed only
  std::uint64_t seed = 0;
};

namespace detail {

inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (auto p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq ss(words.begin(), words.end());
  std::array<std::uint32_t, 2> out{};
  ss.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace detail

inline PairOutcome forward_backward(const Model& m, const video::VideoSample& s, std::size_t caption,
                                    const TrainConfig& cfg, const PairContext& ctx, GradBuffer& grads) {
  const TokenSeq& target = s.captions.at(caption);
  Graph g(m.store);
  CaptionOptions co;
  co.mode = cfg.scheduled_sampling_p > 0.0 ? DecodeMode::scheduled(cfg.scheduled_sampling_p) : DecodeMode::teacher_forced();
  co.targets = &target;
  co.dropout = cfg.dropout;
  co.dropout_seed = ctx.seed ^ 0x9E3779B97F4A7C15ull;
  co.encode.step1_only = !ctx.two_step;
  co.encode.key_override = ctx.two_step ? ctx.key_override : std::nullopt;

  auto res = caption_video(g, m, s, co);
  PairOutcome out;
  out.i_key = res.encode.i_key;
  Var xe1 = xent_loss(g, res.step1.log_probs, target);
  out.xe1 = xe1.item();
  Var loss = xe1;
  if (ctx.two_step) {
    Var xe2 = xent_loss(g, res.step2->log_probs, target);
    out.xe2 = xe2.item();
    out.reward = reward(out.xe1, out.xe2);
    Var rl = g.constant(Tensor::scalar(0.0));
    if (res.encode.alpha) {
      Var alpha_key = pick(*res.encode.alpha, res.encode.i_key);
      out.alpha_key = alpha_key.item();
      if (ctx.threshold) {
        rl = rl_loss_plus(g, out.reward, *ctx.threshold, alpha_key);
        out.rl_applied = true;
      }
    }
    loss = combined_loss(xe1, xe2, rl, cfg.beta);
  }
  out.loss = loss.item();
  if (!std::isfinite(out.loss))
    throw std::runtime_error("non-finite loss on sample " + s.id + " caption " + std::to_string(caption));
  g.backward(loss);
  g.accumulate_param_grads(grads);
  return out;
}

inline bool is_phase_b(const TrainConfig& cfg, std::size_t epoch0) { return epoch0 >= cfg.pretrain_epochs; }

inline TrainResult train(Model& model, const std::vector<video::VideoSample>& data, const TrainConfig& cfg,
                         RewardLedger& ledger, const TrainHooks& hooks = {}) {
  if (data.empty()) throw std::invalid_argument("train: dataset is empty");
  cfg.validate();
  Optimizer opt(optimizer_from_name(cfg.optimizer), cfg.learning_rate, model.store);
  const bool frozen = hooks.key_overrides != nullptr;

  struct Pair {
    std::size_t video, caption;
  };
  std::vector<Pair> pairs;
  for (std::size_t v = 0; v < data.size(); ++v)
    for (std::size_t c = 0; c < data[v].captions.size(); ++c) pairs.push_back({v, c});

  TrainResult result;
  const bool any_phase_b = cfg.epochs > cfg.pretrain_epochs;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const bool two_step = is_phase_b(cfg, e);
    std::mt19937_64 shuffle_rng(detail::mix_seed({cfg.seed, e, 0x5u}));
    std::vector<Pair> order = pairs;
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochStats st;
    st.epoch = e + 1;
    st.phase = two_step ? 'B' : 'A';
    double sum_xe1 = 0, sum_xe2 = 0, sum_r = 0, sum_alpha = 0;
    std::size_t n_alpha = 0, inside = 0;

    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      const std::size_t n = b1 - b0;
      std::vector<GradBuffer> grads(n, GradBuffer(model.store));
      std::vector<PairOutcome> outs(n);
      std::vector<PairContext> ctxs(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& p = order[b0 + i];
        const auto& s = data[p.video];
        auto& c = ctxs[i];
        c.two_step = two_step;
        c.seed = detail::mix_seed({cfg.seed, e, p.video, p.caption});
        if (frozen) {
          auto it = hooks.key_overrides->find(s.id);
          if (it == hooks.key_overrides->end()) throw std::invalid_argument("train: no frozen key frame for " + s.id);
          c.key_override = it->second;
        } else if (two_step) {
          c.threshold = ledger.get(s.id, p.caption);
        }
      }
      auto work = [&](std::size_t i) {
        const auto& p = order[b0 + i];
        outs[i] = forward_backward(model, data[p.video], p.caption, cfg, ctxs[i], grads[i]);
      };
      if (cfg.workers > 1 && n > 1) {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(cfg.workers);
        for (std::size_t w = 0; w < cfg.workers; ++w)
          pool.emplace_back([&, w] {
            try {
              for (std::size_t i = w; i < n; i += cfg.workers) work(i);
            } catch (...) {
              errors[w] = std::current_exception();
            }
          });
        for (auto& t : pool) t.join();
        for (auto& ep : errors)
          if (ep) std::rethrow_exception(ep);
      } else {
        for (std::size_t i = 0; i < n; ++i) work(i);
      }

      // Reduce in (sample id, caption) order so the sum does not depend on the shuffle.
      std::vector<std::size_t> red(n);
      std::iota(red.begin(), red.end(), std::size_t{0});
      std::sort(red.begin(), red.end(), [&](std::size_t a, std::size_t b) {
        const auto &pa = order[b0 + a], &pb = order[b0 + b];
        const auto &ia = data[pa.video].id, &ib = data[pb.video].id;
        return ia != ib ? ia < ib : pa.caption < pb.caption;
      });
      GradBuffer total = std::move(grads[red[0]]);
      for (std::size_t i = 1; i < n; ++i) total.add(grads[red[i]]);
      if (n > 1) total.scale(1.0 / static_cast<double>(n));
      clip_global_norm(total, cfg.clip_norm);
      opt.step(model.store, total);

      for (std::size_t i = 0; i < n; ++i) {
        const auto& p = order[b0 + i];
        const auto& s = data[p.video];
        const auto& o = outs[i];
        sum_xe1 += o.xe1;
        inside += s.event.contains(o.i_key) ? 1 : 0;
        if (two_step) {
          sum_xe2 += o.xe2;
          sum_r += o.reward;
          if (!std::isnan(o.alpha_key)) {
            sum_alpha += o.alpha_key;
            ++n_alpha;
          }
          if (!frozen) ledger.set(s.id, p.caption, o.reward);
          st.rl_applied += o.rl_applied ? 1 : 0;
        }
      }
    }

    const double np = static_cast<double>(pairs.size());
    st.mean_xe1 = sum_xe1 / np;
    st.keyframe_inside_event_fraction = static_cast<double>(inside) / np;
    if (two_step) {
      st.mean_xe2 = sum_xe2 / np;
      st.mean_reward = sum_r / np;
      if (n_alpha) st.mean_alpha_key = sum_alpha / static_cast<double>(n_alpha);
      if (!frozen) ledger.advance_epoch();
    }

    if (hooks.validation && !hooks.validation->empty() && (two_step || !any_phase_b)) {
      EvalOptions eo;
      eo.key_overrides = hooks.key_overrides;
      eo.step1_only = !two_step;
      eo.max_steps = cfg.max_len + 1;
      st.val_cider = evaluate(model, *hooks.validation, eo).cider;
      if (st.val_cider > result.best_val_cider) {
        result.best_val_cider = st.val_cider;
        result.best_epoch = st.epoch;
        result.best = model;
      }
    }
    result.history.push_back(st);
    if (hooks.on_epoch_end) hooks.on_epoch_end(st, model);
  }
  return result;
}

}  // namespace wit
