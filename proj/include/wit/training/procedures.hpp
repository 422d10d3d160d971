// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "wit/training/trainer.hpp"

namespace wit {

struct FreezeResult {
  Model model;
  video::KeyFrameMap keys;
  TrainResult training;
};

/// Records the key frame `best` picks for every video in `key_sets`, then
/// trains a freshly initialized model that encodes step 2 from those
/// constants with no refocus loss.
inline FreezeResult freeze_keyframes_retrain(const Model& best, const std::vector<video::VideoSample>& data,
                                             const std::vector<const std::vector<video::VideoSample>*>& key_sets,
                                             const TrainConfig& cfg, std::uint64_t init_seed,
                                             const std::vector<video::VideoSample>* validation = nullptr) {
  FreezeResult r{Model::create(best.dims, init_seed), {}, {}};
  r.keys = predict_keyframes(best, data);
  for (const auto* set : key_sets) {
    if (!set) continue;
    for (auto& [id, k] : predict_keyframes(best, *set)) r.keys[id] = k;
  }
  RewardLedger unused;
  TrainHooks hooks;
  hooks.key_overrides = &r.keys;
  hooks.validation = validation;
  r.training = train(r.model, data, cfg, unused, hooks);
  return r;
}

enum class ScstMetric { Cider, RougeL };

inline ScstMetric scst_metric_from_name(const std::string& s) {
  if (s == "cider") return ScstMetric::Cider;
  if (s == "rouge_l" || s == "rouge-l") return ScstMetric::RougeL;
  throw std::invalid_argument("unknown SCST metric '" + s + "' (expected cider or rouge_l)");
}

struct ScstEpoch {
  std::size_t epoch = 0;
  double mean_sample_reward = 0.0;
  double mean_greedy_reward = 0.0;
  double val_cider = std::numeric_limits<double>::quiet_NaN();
};

/// Self-critical fine-tuning of the decoder. For each video a caption is
/// sampled from the final representation; its metric score minus the greedy
/// caption's score weights the sampled tokens' log-likelihood. Encoder
/// parameters (including the refocus scorer) are not updated.
inline std::vector<ScstEpoch> scst_finetune(Model& m, const std::vector<video::VideoSample>& data, ScstMetric metric,
                                            const TrainConfig& cfg, std::size_t epochs,
                                            const video::KeyFrameMap* key_overrides = nullptr,
                                            const std::vector<video::VideoSample>* validation = nullptr) {
  if (data.empty()) throw std::invalid_argument("scst_finetune: dataset is empty");
  cfg.validate();
  Optimizer opt(optimizer_from_name(cfg.optimizer), cfg.learning_rate, m.store);
  opt.restrict_to(m.decoder_params());
  std::vector<RefSet> all_refs;
  for (const auto& s : data) all_refs.push_back(reference_set(s));
  const CorpusStats stats = CorpusStats::build(all_refs);
  auto score = [&](const TokenSeq& cand, const RefSet& refs) {
    return metric == ScstMetric::Cider ? cider_sentence(cand, refs, stats) : rouge_l_sentence(cand, refs);
  };

  std::vector<ScstEpoch> hist;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::mt19937_64 shuffle_rng(detail::mix_seed({cfg.seed, e, 0x5C57u}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    ScstEpoch st;
    st.epoch = e + 1;
    for (std::size_t vi : order) {
      const auto& s = data[vi];
      std::optional<std::size_t> key;
      if (key_overrides) key = key_overrides->at(s.id);

      CaptionOptions greedy;
      greedy.mode = DecodeMode::greedy();
      greedy.max_steps = cfg.max_len + 1;
      greedy.encode.key_override = key;
      TokenSeq greedy_caption;
      {
        Graph g(m.store);
        auto r = caption_video(g, m, s, greedy);
        greedy_caption = strip_special((r.step2 ? *r.step2 : r.step1).tokens);
      }

      std::mt19937_64 rng(detail::mix_seed({cfg.seed, e, vi, 0xC0DEu}));
      CaptionOptions samp = greedy;
      samp.mode = DecodeMode::sample();
      samp.rng = &rng;
      Graph g(m.store);
      auto r = caption_video(g, m, s, samp);
      const DecodeOutput& out = r.step2 ? *r.step2 : r.step1;
      const RefSet& refs = all_refs[vi];
      const double rs = score(strip_special(out.tokens), refs);
      const double rb = score(greedy_caption, refs);
      st.mean_sample_reward += rs;
      st.mean_greedy_reward += rb;
      Var loss = scst_loss(g, out.log_probs, out.tokens, rs - rb);
      if (!g.requires_grad(loss)) continue;
      if (!std::isfinite(loss.item())) throw std::runtime_error("non-finite SCST loss on sample " + s.id);
      g.backward(loss);
      GradBuffer grads(m.store);
      g.accumulate_param_grads(grads);
      clip_global_norm(grads, cfg.clip_norm);
      opt.step(m.store, grads);
    }
    st.mean_sample_reward /= static_cast<double>(data.size());
    st.mean_greedy_reward /= static_cast<double>(data.size());
    if (validation && !validation->empty()) {
      EvalOptions eo;
      eo.key_overrides = key_overrides;
      eo.max_steps = cfg.max_len + 1;
      st.val_cider = evaluate(m, *validation, eo).cider;
    }
    hist.push_back(st);
  }
  return hist;
}

}  // namespace wit
