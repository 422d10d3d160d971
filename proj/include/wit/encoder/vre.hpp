// SPDX-License-Identifier: Apache-2.0
//
// Two-pass Video Refocusing Encoder.
//
//   step 1:  h1 = KBiGRU(V_f, floor(K/2))
//            o1 = tanh([h1, v_a] W_a + b_a)
//            i_key = argmax refocus(o1, V_f)
//   step 2:  h2 = KBiGRU(V_f, i_key)
//            o2~ = tanh([h1, h2] W_m + b_m)
//            o2 = tanh([o2~, v_a] W_a + b_a)
//
// W_a/b_a are shared by both steps. Without audio W_a is H x H and acts on
// the hidden vector alone.
#pragma once

#include <optional>
#include <random>

#include "wit/encoder/kbigru.hpp"
#include "wit/encoder/refocus.hpp"

namespace wit {

struct VreParams {
  KBiGruParams kbigru;
  RefocusParams refocus;
  ParamId W_a, b_a, W_m, b_m;
  std::size_t audio = 0;

  std::size_t hidden() const { return kbigru.hidden(); }

  static VreParams create(ParamStore& store, std::size_t channels, std::size_t audio, std::size_t hidden,
                          std::size_t refocus_dim, std::mt19937_64& rng) {
    VreParams p;
    p.audio = audio;
    p.kbigru = KBiGruParams::create(store, channels, hidden, rng);
    p.refocus = RefocusParams::create(store, hidden, channels, refocus_dim, rng);
    p.W_a = store.add("W_a", uniform_init({hidden + audio, hidden}, hidden + audio, rng));
    p.b_a = store.add("b_a", Tensor({hidden}));
    p.W_m = store.add("W_m", uniform_init({2 * hidden, hidden}, 2 * hidden, rng));
    p.b_m = store.add("b_m", Tensor({hidden}));
    return p;
  }
};

struct VreOptions {
  /// Bypasses the refocus step; step 2 encodes from this frame.
  std::optional<std::size_t> key_override;
  /// Stop after o1 (pre-training phase).
  bool step1_only = false;
};

struct EncodeResult {
  Var o1;
  Var o2;  // invalid when step1_only
  Var h1, h2;
  std::size_t default_key = 0;
  std::size_t i_key = 0;
  std::optional<Var> alpha;  // absent when the key was overridden
};

inline std::size_t default_key_frame(std::size_t K) { return K / 2; }

namespace detail {

inline Var audio_fuse(Graph& g, const VreParams& p, Var h, const std::optional<Var>& v_a) {
  Var in = h;
  if (p.audio > 0) {
    if (!v_a) throw std::invalid_argument("vre_encode: model expects an audio vector of size " + std::to_string(p.audio));
    expect_shape(*v_a, {p.audio}, "vre_encode audio");
    in = concat({h, *v_a});
  } else if (v_a) {
    throw std::invalid_argument("vre_encode: audio supplied to a model built without audio");
  }
  return tanh(affine(in, g.param(p.W_a), g.param(p.b_a)));
}

}  // namespace detail

inline EncodeResult vre_encode(Graph& g, const VreParams& p, Var V_f, const std::optional<Var>& v_a,
                               const VreOptions& opt = {}) {
  if (V_f.shape().size() != 2 || V_f.shape()[0] == 0) throw ShapeError("vre_encode: V_f must be K x C");
  const std::size_t K = V_f.shape()[0];
  EncodeResult r;
  r.default_key = default_key_frame(K);
  r.h1 = kbigru_encode(g, p.kbigru, V_f, r.default_key).combined;
  r.o1 = detail::audio_fuse(g, p, r.h1, v_a);
  r.i_key = r.default_key;
  if (opt.step1_only && !opt.key_override) return r;

  if (opt.key_override) {
    if (*opt.key_override >= K) throw std::out_of_range("vre_encode: key override outside the video");
    r.i_key = *opt.key_override;
  } else {
    auto rf = refocus(g, p.refocus, r.o1, V_f);
    r.i_key = rf.i_key;
    r.alpha = rf.alpha;
  }
  if (opt.step1_only) return r;

  r.h2 = kbigru_encode(g, p.kbigru, V_f, r.i_key).combined;
  Var merged = tanh(affine(concat({r.h1, r.h2}), g.param(p.W_m), g.param(p.b_m)));
  r.o2 = detail::audio_fuse(g, p, merged, v_a);
  return r;
}

}  // namespace wit
