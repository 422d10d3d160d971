// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "wit/decoder/captioner.hpp"
#include "wit/metrics/scores.hpp"
#include "wit/video/dataset_io.hpp"

namespace wit {

struct EvalOptions {
  const video::KeyFrameMap* key_overrides = nullptr;
  bool step1_only = false;
  std::size_t max_steps = Vocabulary::kDefaultMaxLen + 1;
  bool keep_attention = false;
};

struct VideoEval {
  std::string id;
  std::size_t i_key = 0;
  bool key_inside_event = false;
  TokenSeq caption;            // content tokens of the final caption
  std::vector<double> alpha;   // refocus weights, empty when overridden
  std::array<std::vector<Tensor>, 2> temporal_weights;  // per decode pass, per step
  std::array<std::vector<Tensor>, 2> spatial_weights;
};

struct EvalReport {
  double bleu4 = 0.0, rouge_l = 0.0, cider = 0.0;
  std::size_t count = 0;
  double keyframe_inside_fraction = 0.0;
  double default_inside_fraction = 0.0;
  std::vector<VideoEval> videos;
};

inline RefSet reference_set(const video::VideoSample& s) {
  RefSet r;
  for (const auto& c : s.captions) r.push_back(strip_special(c));
  return r;
}

/// Greedy captions from the final representation (o2, or o1 when step 1
/// only), scored against every reference caption of the video. CIDEr
/// document frequencies come from the evaluated set itself.
inline EvalReport evaluate(const Model& m, const std::vector<video::VideoSample>& samples, const EvalOptions& opt = {}) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  EvalReport rep;
  std::vector<TokenSeq> cands;
  std::vector<RefSet> refs;
  std::size_t inside = 0, default_inside = 0;
  for (const auto& s : samples) {
    Graph g(m.store);
    CaptionOptions co;
    co.mode = DecodeMode::greedy();
    co.max_steps = opt.max_steps;
    co.encode.step1_only = opt.step1_only;
    if (opt.key_overrides) {
      auto it = opt.key_overrides->find(s.id);
      if (it == opt.key_overrides->end()) throw std::invalid_argument("evaluate: no frozen key frame for " + s.id);
      co.encode.key_override = it->second;
    }
    auto res = caption_video(g, m, s, co);
    const DecodeOutput& final_out = res.step2 ? *res.step2 : res.step1;
    VideoEval ve;
    ve.id = s.id;
    ve.i_key = res.encode.i_key;
    ve.key_inside_event = s.event.contains(ve.i_key);
    ve.caption = strip_special(final_out.tokens);
    if (res.encode.alpha) ve.alpha = res.encode.alpha->value().values();
    if (opt.keep_attention) {
      ve.temporal_weights[0] = res.step1.temporal_weights;
      ve.spatial_weights[0] = res.step1.spatial_weights;
      if (res.step2) {
        ve.temporal_weights[1] = res.step2->temporal_weights;
        ve.spatial_weights[1] = res.step2->spatial_weights;
      }
    }
    inside += ve.key_inside_event ? 1 : 0;
    default_inside += s.event.contains(res.encode.default_key) ? 1 : 0;
    cands.push_back(ve.caption);
    refs.push_back(reference_set(s));
    rep.videos.push_back(std::move(ve));
  }
  rep.count = samples.size();
  rep.bleu4 = bleu4(cands, refs);
  rep.rouge_l = rouge_l(cands, refs);
  rep.cider = cider(cands, refs, CorpusStats::build(refs));
  rep.keyframe_inside_fraction = static_cast<double>(inside) / static_cast<double>(rep.count);
  rep.default_inside_fraction = static_cast<double>(default_inside) / static_cast<double>(rep.count);
  return rep;
}

/// i_key per video as chosen by the model's refocus module.
inline video::KeyFrameMap predict_keyframes(const Model& m, const std::vector<video::VideoSample>& samples) {
  video::KeyFrameMap out;
  for (const auto& s : samples) {
    Graph g(m.store);
    const auto in = bind_sample(g, s);
    std::optional<Var> audio = m.dims.audio > 0 ? in.v_a : std::nullopt;
    auto enc = vre_encode(g, m.vre, in.V_f, audio, {});
    out[s.id] = enc.i_key;
  }
  return out;
}

}  // namespace wit
