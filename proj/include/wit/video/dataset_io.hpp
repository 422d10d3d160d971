// SPDX-License-Identifier: Apache-2.0
//
// Dataset persistence: tensors go into the named-tensor container at
// `path`; everything else (task parameters, vocabulary, captions, event
// segments, optional frozen key frames) goes into the JSON sidecar at
// `path + ".json"`.
#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "wit/autodiff/checkpoint.hpp"
#include "wit/video/synthetic.hpp"

namespace wit::video {

using KeyFrameMap = std::map<std::string, std::size_t>;

struct Dataset {
  SyntheticTaskSpec spec;
  Vocabulary vocab;
  std::vector<VideoSample> samples;
  KeyFrameMap keyframes;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline constexpr int kSidecarVersion = 1;

inline void to_json(nlohmann::json& j, const CaptionGrammar& g) {
  j = {{"verbs", g.verbs}, {"places", g.places}, {"patterns", g.patterns}};
}
inline void from_json(const nlohmann::json& j, CaptionGrammar& g) {
  j.at("verbs").get_to(g.verbs);
  j.at("places").get_to(g.places);
  j.at("patterns").get_to(g.patterns);
}

inline void to_json(nlohmann::json& j, const SyntheticTaskSpec& s) {
  j = {{"K", s.K},
       {"N", s.N},
       {"M", s.M},
       {"C", s.C},
       {"C_a", s.C_a},
       {"min_event_length", s.min_event_length},
       {"max_event_length", s.max_event_length},
       {"noise_std", s.noise_std},
       {"signal_amplitude", s.signal_amplitude},
       {"layout_amplitude", s.layout_amplitude},
       {"distractor_amplitude", s.distractor_amplitude},
       {"distractor_prob", s.distractor_prob},
       {"audio_noise_std", s.audio_noise_std},
       {"template_count", s.template_count},
       {"layout_count", s.layout_count},
       {"regions_per_layout", s.regions_per_layout},
       {"captions_per_video", s.captions_per_video},
       {"max_caption_len", s.max_caption_len},
       {"grammar", s.grammar},
       {"seed", s.seed}};
}

/// Missing keys keep their defaults so partial configs are accepted.
inline void from_json(const nlohmann::json& j, SyntheticTaskSpec& s) {
  auto opt = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("K", s.K);
  opt("N", s.N);
  opt("M", s.M);
  opt("C", s.C);
  opt("C_a", s.C_a);
  opt("min_event_length", s.min_event_length);
  opt("max_event_length", s.max_event_length);
  opt("noise_std", s.noise_std);
  opt("signal_amplitude", s.signal_amplitude);
  opt("layout_amplitude", s.layout_amplitude);
  opt("distractor_amplitude", s.distractor_amplitude);
  opt("distractor_prob", s.distractor_prob);
  opt("audio_noise_std", s.audio_noise_std);
  opt("template_count", s.template_count);
  opt("layout_count", s.layout_count);
  opt("regions_per_layout", s.regions_per_layout);
  opt("captions_per_video", s.captions_per_video);
  opt("max_caption_len", s.max_caption_len);
  opt("grammar", s.grammar);
  opt("seed", s.seed);
}

inline nlohmann::json sidecar_json(const Dataset& d) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : d.samples) {
    samples.push_back({{"id", s.id},
                       {"captions", s.captions},
                       {"event_segment", {s.event.start, s.event.end}},
                       {"template", s.template_id},
                       {"layout", s.layout_id},
                       {"has_audio", s.v_a.has_value()}});
  }
  nlohmann::json j = {{"format", "wit-dataset"},
                      {"version", kSidecarVersion},
                      {"spec", d.spec},
                      {"vocabulary", d.vocab.tokens()},
                      {"max_caption_len", d.vocab.max_len()},
                      {"samples", samples}};
  if (!d.keyframes.empty()) j["keyframes"] = d.keyframes;
  return j;
}

inline void save_dataset(const Dataset& d, const std::string& path) {
  NamedTensors tensors;
  for (const auto& s : d.samples) {
    tensors.emplace_back(s.id + "/V_f", s.V_f);
    tensors.emplace_back(s.id + "/v_s", s.v_s);
    if (s.v_a) tensors.emplace_back(s.id + "/v_a", *s.v_a);
  }
  save_container(path, tensors);
  std::ofstream js(path + ".json", std::ios::trunc);
  if (!js) throw std::runtime_error("cannot open for writing: " + path + ".json");
  js << sidecar_json(d).dump(1) << '\n';
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream js(path + ".json");
  if (!js) throw std::runtime_error("cannot open for reading: " + path + ".json");
  nlohmann::json j;
  try {
    js >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed dataset sidecar " + path + ".json: " + e.what());
  }
  if (j.value("format", "") != "wit-dataset") throw FormatError("not a dataset sidecar: " + path + ".json");
  if (j.value("version", -1) != kSidecarVersion)
    throw FormatError("unsupported dataset sidecar version in " + path + ".json");

  Dataset d;
  d.spec = j.at("spec").get<SyntheticTaskSpec>();
  auto tokens = j.at("vocabulary").get<std::vector<std::string>>();
  if (tokens.size() < 3) throw FormatError("dataset vocabulary lacks reserved tokens");
  d.vocab = Vocabulary(std::vector<std::string>(tokens.begin() + 3, tokens.end()), j.at("max_caption_len").get<std::size_t>());
  if (d.vocab.tokens() != tokens) throw FormatError("dataset vocabulary reserved tokens out of order");
  if (j.contains("keyframes")) j.at("keyframes").get_to(d.keyframes);

  auto tensors = load_container(path);
  std::map<std::string, Tensor> by_name;
  for (auto& [n, t] : tensors) by_name.emplace(std::move(n), std::move(t));
  auto take = [&](const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("dataset container lacks tensor " + name);
    return it->second;
  };
  for (const auto& js_s : j.at("samples")) {
    VideoSample s;
    s.id = js_s.at("id").get<std::string>();
    s.captions = js_s.at("captions").get<std::vector<TokenSeq>>();
    const auto seg = js_s.at("event_segment").get<std::vector<std::size_t>>();
    if (seg.size() != 2) throw FormatError("event_segment must have two entries for " + s.id);
    s.event = {seg[0], seg[1]};
    s.template_id = js_s.at("template").get<std::size_t>();
    s.layout_id = js_s.at("layout").get<std::size_t>();
    s.V_f = take(s.id + "/V_f");
    s.v_s = take(s.id + "/v_s");
    if (js_s.at("has_audio").get<bool>()) s.v_a = take(s.id + "/v_a");
    d.samples.push_back(std::move(s));
  }
  return d;
}

/// Generates a dataset with its own vocabulary and no frozen key frames.
inline Dataset make_dataset(const SyntheticTaskSpec& spec, std::size_t count, std::uint64_t first_index = 0,
                            const std::string& prefix = "vid") {
  return Dataset{spec, task_vocabulary(spec), generate_dataset(spec, count, first_index, prefix), {}};
}

}  // namespace wit::video
