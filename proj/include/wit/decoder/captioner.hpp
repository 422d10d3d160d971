// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>

#include "wit/decoder/decoder.hpp"
#include "wit/encoder/vre.hpp"
#include "wit/video/synthetic.hpp"

namespace wit {

struct ModelDims {
  std::size_t channels = 16;  // C
  std::size_t audio = 8;      // C_a, 0 disables audio
  std::size_t hidden = 32;    // H, also the word-embedding size
  std::size_t refocus_dim = 0;    // D of the refocus module, 0 means H
  std::size_t attention_dim = 0;  // D of both decoder attentions, 0 means H
  std::size_t vocab = 0;

  std::size_t refocus_d() const { return refocus_dim ? refocus_dim : hidden; }
  std::size_t attention_d() const { return attention_dim ? attention_dim : hidden; }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Every trainable tensor of the captioner plus the handles into them.
struct Model {
  ModelDims dims;
  ParamStore store;
  VreParams vre;
  DecoderParams dec;

  static Model create(const ModelDims& dims, std::uint64_t seed) {
    if (dims.vocab < 4) throw std::invalid_argument("model: vocabulary too small");
    if (dims.hidden == 0 || dims.channels == 0) throw std::invalid_argument("model: hidden and channel sizes must be positive");
    Model m;
    m.dims = dims;
    std::mt19937_64 rng(seed);
    m.vre = VreParams::create(m.store, dims.channels, dims.audio, dims.hidden, dims.refocus_d(), rng);
    m.dec = DecoderParams::create(m.store, dims.channels, dims.audio, dims.hidden, dims.attention_d(), dims.vocab, rng);
    return m;
  }

  /// Ids of decoder parameters (the SCST-trainable subset).
  std::vector<ParamId> decoder_params() const {
    std::vector<ParamId> ids;
    for (ParamId i = 0; i < store.size(); ++i) {
      const auto& n = store.name(i);
      if (n.rfind("att_", 0) == 0 || n.rfind("lstm.", 0) == 0 || n == "W_emb" || n == "W_out" || n == "b_out")
        ids.push_back(i);
    }
    return ids;
  }

  /// Ids of the refocus scorer.
  std::vector<ParamId> refocus_params() const {
    return {vre.refocus.W_o, vre.refocus.W_v, vre.refocus.W_alpha, vre.refocus.b_alpha};
  }
};

struct CaptionOptions {
  DecodeMode mode = DecodeMode::teacher_forced();
  const TokenSeq* targets = nullptr;
  std::size_t max_steps = Vocabulary::kDefaultMaxLen + 1;
  VreOptions encode;
  double dropout = 0.0;
  std::uint64_t dropout_seed = 0;
  std::mt19937_64* rng = nullptr;
};

struct CaptionResult {
  EncodeResult encode;
  DecodeOutput step1;
  std::optional<DecodeOutput> step2;  // absent when encoding stopped after step 1
};

struct SampleInputs {
  Var V_f, v_s;
  std::optional<Var> v_a;
};

inline SampleInputs bind_sample(Graph& g, const video::VideoSample& s) {
  SampleInputs in{g.constant(s.V_f), g.constant(s.v_s), std::nullopt};
  if (s.v_a) in.v_a = g.constant(*s.v_a);
  return in;
}

/// Encodes once, then decodes from o1 and (unless step 1 only) from o2 with
/// the same decoder parameters and the same dropout masks.
inline CaptionResult caption_video(Graph& g, const Model& m, const video::VideoSample& s, const CaptionOptions& opt) {
  if (s.V_f.rank() != 2 || s.V_f.dim(1) != m.dims.channels)
    throw ShapeError("caption_video: sample " + s.id + " V_f " + shape_str(s.V_f.shape()) + " does not match model");
  const auto in = bind_sample(g, s);
  std::optional<Var> audio = m.dims.audio > 0 ? in.v_a : std::nullopt;
  if (m.dims.audio > 0 && !audio) throw std::invalid_argument("caption_video: sample " + s.id + " lacks audio");

  CaptionResult r;
  r.encode = vre_encode(g, m.vre, in.V_f, audio, opt.encode);
  DecodeOptions d;
  d.mode = opt.mode;
  d.targets = opt.targets;
  d.max_steps = opt.max_steps;
  d.dropout = opt.dropout;
  d.dropout_seed = opt.dropout_seed;
  d.rng = opt.rng;
  r.step1 = decode_step_sequence(g, m.dec, r.encode.o1, in.V_f, in.v_s, audio, d);
  if (r.encode.o2.valid()) r.step2 = decode_step_sequence(g, m.dec, r.encode.o2, in.V_f, in.v_s, audio, d);
  return r;
}

}  // namespace wit
