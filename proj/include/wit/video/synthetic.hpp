// SPDX-License-Identifier: Apache-2.0
//
// Synthetic stand-in for CNN frame features. Each video is a K x N x M x C
// feature volume with one planted event: an event template signal occupying
// the regions of a spatial layout over a contiguous frame segment. Captions
// name both the event (temporal evidence) and the layout's place (spatial
// evidence).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "wit/autodiff/graph.hpp"
#include "wit/autodiff/tensor.hpp"
#include "wit/metrics/vocab.hpp"

namespace wit::video {

/// Per-video feature volume, shape K x N x M x C.
struct RawFrameFeatures {
  Tensor data;

  explicit RawFrameFeatures(Tensor t) : data(std::move(t)) {
    const auto& s = data.shape();
    if (s.size() != 4) throw ShapeError("raw frame features must be rank 4 (KxNxMxC), got " + shape_str(s));
    if (s[0] < 2) throw ShapeError("raw frame features need K >= 2 frames, got " + shape_str(s));
  }

  std::size_t frames() const { return data.dim(0); }
};

/// Spatial mean per frame: K x C.
inline Tensor pool_temporal(const RawFrameFeatures& raw) {
  OpAttrs at;
  at.axes = {1, 2};
  return detail::compute(Primitive::Mean, {&raw.data}, at);
}

/// Frame mean per region: N x M x C.
inline Tensor pool_spatial(const RawFrameFeatures& raw) {
  OpAttrs at;
  at.axes = {0};
  return detail::compute(Primitive::Mean, {&raw.data}, at);
}

struct CaptionGrammar {
  std::vector<std::string> verbs;     // one per event template
  std::vector<std::string> places;    // one per spatial layout
  std::vector<std::string> patterns;  // with "{verb}" and "{place}" slots

  static CaptionGrammar standard() {
    return {{"running", "jumping", "cooking", "dancing", "swimming", "singing", "climbing", "painting"},
            {"kitchen", "park", "stage", "pool", "street", "garden", "gym", "beach"},
            {"a person is {verb} in the {place}", "someone is {verb} at a {place}",
             "a man {verb} near the {place}"}};
  }

  std::string realize(std::size_t pattern, std::size_t tmpl, std::size_t layout) const {
    std::string s = patterns.at(pattern);
    auto sub = [&s](const std::string& key, const std::string& val) {
      for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + val.size()))
        s.replace(pos, key.size(), val);
    };
    sub("{verb}", verbs.at(tmpl));
    sub("{place}", places.at(layout));
    return s;
  }

  /// Every word any realization can produce, sorted.
  std::vector<std::string> words() const {
    std::vector<std::string> w;
    for (const auto& p : patterns)
      for (auto& t : tokenize(p))
        if (t != "{verb}" && t != "{place}") w.push_back(t);
    w.insert(w.end(), verbs.begin(), verbs.end());
    w.insert(w.end(), places.begin(), places.end());
    std::sort(w.begin(), w.end());
    w.erase(std::unique(w.begin(), w.end()), w.end());
    return w;
  }

  friend bool operator==(const CaptionGrammar&, const CaptionGrammar&) = default;
};

struct SyntheticTaskSpec {
  std::size_t K = 12, N = 3, M = 3, C = 16, C_a = 8;
  std::size_t min_event_length = 4, max_event_length = 4;
  double noise_std = 0.3;
  double signal_amplitude = 2.0;
  double layout_amplitude = 1.0;
  double distractor_amplitude = 1.0;
  double distractor_prob = 0.5;
  double audio_noise_std = 1.0;
  std::size_t template_count = 8;
  std::size_t layout_count = 8;
  std::size_t regions_per_layout = 2;
  std::size_t captions_per_video = 2;
  std::size_t max_caption_len = Vocabulary::kDefaultMaxLen;
  CaptionGrammar grammar = CaptionGrammar::standard();
  std::uint64_t seed = 1;

  std::size_t vocab_size() const { return grammar.words().size() + 3; }

  void validate() const {
    if (K < 2) throw std::invalid_argument("task spec: K must be >= 2");
    if (N < 1 || M < 1 || C < 1) throw std::invalid_argument("task spec: N, M, C must be >= 1");
    if (min_event_length < 1 || min_event_length > max_event_length || max_event_length > K - 1)
      throw std::invalid_argument("task spec: event length range must lie in [1, K-1]");
    if (template_count < 1 || layout_count < 1) throw std::invalid_argument("task spec: need templates and layouts");
    if (grammar.verbs.size() < template_count)
      throw std::invalid_argument("caption grammar has no verb for template " + std::to_string(grammar.verbs.size()));
    if (grammar.places.size() < layout_count)
      throw std::invalid_argument("caption grammar has no place for layout " + std::to_string(grammar.places.size()));
    if (grammar.patterns.empty()) throw std::invalid_argument("caption grammar has no patterns");
    if (regions_per_layout < 1 || regions_per_layout > N * M)
      throw std::invalid_argument("task spec: regions_per_layout must lie in [1, N*M]");
    if (captions_per_video < 1) throw std::invalid_argument("task spec: captions_per_video must be >= 1");
    if (noise_std < 0 || audio_noise_std < 0 || distractor_prob < 0 || distractor_prob > 1)
      throw std::invalid_argument("task spec: noise levels must be >= 0 and probabilities in [0,1]");
  }

  friend bool operator==(const SyntheticTaskSpec&, const SyntheticTaskSpec&) = default;
};

struct EventSegment {
  std::size_t start = 0, end = 0;  // inclusive
  bool contains(std::size_t i) const { return i >= start && i <= end; }
  std::size_t length() const { return end - start + 1; }
  friend bool operator==(const EventSegment&, const EventSegment&) = default;
};

struct VideoSample {
  std::string id;
  Tensor V_f;                 // K x C
  Tensor v_s;                 // N x M x C
  std::optional<Tensor> v_a;  // C_a
  std::vector<TokenSeq> captions;
  EventSegment event;
  std::size_t template_id = 0;
  std::size_t layout_id = 0;

  friend bool operator==(const VideoSample&, const VideoSample&) = default;
};

/// Signals shared by every sample drawn from one seed.
struct TaskWorld {
  std::vector<Tensor> templates;                        // C each
  std::vector<Tensor> entities;                         // C each
  std::vector<std::vector<std::size_t>> layout_regions;  // flat n*M+m cells
  std::vector<Tensor> audio;                            // C_a each

  explicit TaskWorld(const SyntheticTaskSpec& spec) {
    std::seed_seq ss{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), 0xC0FFEEu};
    std::mt19937_64 rng(ss);
    std::normal_distribution<double> g(0.0, 1.0);
    auto unit = [&](std::size_t n) {
      Tensor t({n});
      double norm = 0.0;
      for (auto& v : t.values()) {
        v = g(rng);
        norm += v * v;
      }
      norm = std::sqrt(norm / static_cast<double>(n));
      for (auto& v : t.values()) v /= norm;
      return t;
    };
    for (std::size_t i = 0; i < spec.template_count; ++i) templates.push_back(unit(spec.C));
    for (std::size_t i = 0; i < spec.layout_count; ++i) entities.push_back(unit(spec.C));
    std::vector<std::size_t> cells(spec.N * spec.M);
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
    for (std::size_t l = 0; l < spec.layout_count; ++l) {
      std::shuffle(cells.begin(), cells.end(), rng);
      std::vector<std::size_t> r(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(spec.regions_per_layout));
      std::sort(r.begin(), r.end());
      layout_regions.push_back(std::move(r));
    }
    if (spec.C_a > 0)
      for (std::size_t i = 0; i < spec.template_count; ++i) audio.push_back(unit(spec.C_a));
  }
};

namespace detail {

inline std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(ss);
}

}  // namespace detail

/// Draws sample number `index` of the task. Depends only on (spec.seed, index).
inline VideoSample generate_sample(const SyntheticTaskSpec& spec, const TaskWorld& world, const Vocabulary& vocab,
                                   std::uint64_t index, const std::string& id) {
  auto rng = detail::sample_rng(spec.seed, index);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  VideoSample s;
  s.id = id;
  s.template_id = pick(spec.template_count);
  s.layout_id = pick(spec.layout_count);
  const std::size_t len = spec.min_event_length + pick(spec.max_event_length - spec.min_event_length + 1);
  s.event.start = pick(spec.K - len + 1);
  s.event.end = s.event.start + len - 1;

  const std::size_t R = spec.N * spec.M;
  Tensor raw({spec.K, spec.N, spec.M, spec.C});
  const auto& tmpl = world.templates[s.template_id];
  const auto& ent = world.entities[s.layout_id];
  const auto& cells = world.layout_regions[s.layout_id];
  auto in_layout = [&cells](std::size_t r) { return std::find(cells.begin(), cells.end(), r) != cells.end(); };

  for (std::size_t k = 0; k < spec.K; ++k) {
    const bool in_event = s.event.contains(k);
    // Outside the event a frame may show a weaker, different template in a random cell.
    std::optional<std::size_t> distractor;
    std::size_t distractor_cell = 0;
    if (!in_event && spec.template_count > 1 && u01(rng) < spec.distractor_prob) {
      std::size_t d = pick(spec.template_count - 1);
      if (d >= s.template_id) ++d;
      distractor = d;
      distractor_cell = pick(R);
    }
    for (std::size_t r = 0; r < R; ++r) {
      double* cell = raw.data() + (k * R + r) * spec.C;
      for (std::size_t c = 0; c < spec.C; ++c) {
        double v = spec.noise_std * noise(rng);
        if (in_layout(r)) {
          v += spec.layout_amplitude * ent[c];
          if (in_event) v += spec.signal_amplitude * tmpl[c];
        }
        if (distractor && r == distractor_cell) v += spec.distractor_amplitude * world.templates[*distractor][c];
        cell[c] = v;
      }
    }
  }

  RawFrameFeatures rf(std::move(raw));
  s.V_f = pool_temporal(rf);
  s.v_s = pool_spatial(rf);
  if (spec.C_a > 0) {
    Tensor a = world.audio[s.template_id];
    for (auto& v : a.values()) v += spec.audio_noise_std * noise(rng);
    s.v_a = std::move(a);
  }

  std::vector<std::size_t> order(spec.grammar.patterns.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t c = 0; c < spec.captions_per_video; ++c)
    s.captions.push_back(vocab.encode(spec.grammar.realize(order[c % order.size()], s.template_id, s.layout_id)));
  return s;
}

inline Vocabulary task_vocabulary(const SyntheticTaskSpec& spec) {
  return Vocabulary(spec.grammar.words(), spec.max_caption_len);
}

/// Samples first_index .. first_index+count-1, ids "<prefix><index>".
inline std::vector<VideoSample> generate_dataset(const SyntheticTaskSpec& spec, std::size_t count,
                                                 std::uint64_t first_index = 0, const std::string& prefix = "vid") {
  if (count < 1) throw std::invalid_argument("generate_dataset: count must be >= 1");
  spec.validate();
  const TaskWorld world(spec);
  const Vocabulary vocab = task_vocabulary(spec);
  std::vector<VideoSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto idx = first_index + i;
    out.push_back(generate_sample(spec, world, vocab, idx, prefix + std::to_string(idx)));
  }
  return out;
}

}  // namespace wit::video
