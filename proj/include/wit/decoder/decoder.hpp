// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "wit/decoder/attention.hpp"
#include "wit/decoder/lstm.hpp"
#include "wit/metrics/vocab.hpp"

namespace wit {

/// LSTM sentence decoder with temporal and spatial soft attention. The word
/// embedding size equals the hidden size because o_i takes the embedding's
/// slot in the first step's input.
struct DecoderParams {
  LstmParams lstm;
  ParamId W_emb, W_out, b_out;
  AttentionParams att_T, att_S;
  std::size_t channels = 0, audio = 0, hidden = 0, vocab = 0;

  static DecoderParams create(ParamStore& store, std::size_t channels, std::size_t audio, std::size_t hidden,
                              std::size_t att_dim, std::size_t vocab, std::mt19937_64& rng) {
    DecoderParams p;
    p.channels = channels;
    p.audio = audio;
    p.hidden = hidden;
    p.vocab = vocab;
    p.att_T = AttentionParams::create(store, "att_T.", 2 * hidden, channels, att_dim, rng);
    p.att_S = AttentionParams::create(store, "att_S.", 2 * hidden, channels, att_dim, rng);
    p.lstm = LstmParams::create(store, "lstm.", 2 * channels + audio + hidden, hidden, rng);
    p.W_emb = store.add("W_emb", uniform_init({vocab, hidden}, 1, rng));
    p.W_out = store.add("W_out", uniform_init({hidden, vocab}, hidden, rng));
    p.b_out = store.add("b_out", Tensor({vocab}));
    return p;
  }
};

enum class DecodeKind { TeacherForced, Scheduled, Greedy, Sample };

struct DecodeMode {
  DecodeKind kind = DecodeKind::TeacherForced;
  double p = 0.0;  // scheduled sampling replacement probability

  static DecodeMode teacher_forced() { return {DecodeKind::TeacherForced, 0.0}; }
  static DecodeMode scheduled(double p) { return {DecodeKind::Scheduled, p}; }
  static DecodeMode greedy() { return {DecodeKind::Greedy, 0.0}; }
  static DecodeMode sample() { return {DecodeKind::Sample, 0.0}; }

  bool forced() const { return kind == DecodeKind::TeacherForced || kind == DecodeKind::Scheduled; }
};

struct DecodeOptions {
  DecodeMode mode;
  const TokenSeq* targets = nullptr;  // required by forced modes; one step per entry
  std::size_t max_steps = Vocabulary::kDefaultMaxLen + 1;
  double dropout = 0.0;
  // Seeds the dropout masks and the scheduled-sampling draws of each step, so
  // two passes with the same seed see the same masks and coin flips.
  std::uint64_t dropout_seed = 0;
  std::mt19937_64* rng = nullptr;  // sample mode
};

struct DecodeOutput {
  std::vector<Var> hidden;
  std::vector<Var> log_probs;  // [vocab] per step
  TokenSeq tokens;             // fed-forward choice per step (argmax in forced modes)
  std::vector<Tensor> temporal_weights;
  std::vector<Tensor> spatial_weights;
};

inline std::mt19937_64 step_rng(std::uint64_t seed, std::size_t t, std::uint32_t salt) {
  std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(t), salt};
  return std::mt19937_64(ss);
}

/// Inverted-dropout keep mask for decode step t; identical for identical (seed, t).
inline Tensor dropout_mask(std::size_t n, double rate, std::uint64_t seed, std::size_t t) {
  Tensor m({n}, 1.0);
  if (rate <= 0.0) return m;
  auto rng = step_rng(seed, t, 0xD50Bu);
  std::bernoulli_distribution keep(1.0 - rate);
  for (auto& v : m.values()) v = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return m;
}

inline std::size_t sample_token(const Tensor& log_probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng), acc = 0.0;
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    acc += std::exp(log_probs[i]);
    if (r < acc) return i;
  }
  return log_probs.size() - 1;
}

/// One decoding pass for a single video representation o_i.
///
/// h_{-1} = 0, c_{-1} = o_i. At each step both attentions are queried with
/// [o_i, h_{t-1}]; the LSTM input is [ctx_T, ctx_S, v_a, o_i] at t = 0 and
/// [ctx_T, ctx_S, v_a, emb(y_{t-1})] afterwards. Word log-probabilities are
/// log_softmax(dropout(h_t) W_out + b_out).
inline DecodeOutput decode_step_sequence(Graph& g, const DecoderParams& p, Var o_i, Var V_f, Var v_s,
                                         const std::optional<Var>& v_a, const DecodeOptions& opt) {
  const std::size_t H = p.hidden;
  expect_shape(o_i, {H}, "decode o_i");
  if (V_f.shape().size() != 2 || V_f.shape()[0] == 0 || V_f.shape()[1] != p.channels)
    throw ShapeError("decode: V_f expected K x " + std::to_string(p.channels) + ", got " + shape_str(V_f.shape()));
  if (v_s.shape().empty() || v_s.shape().back() != p.channels)
    throw ShapeError("decode: v_s expected N x M x " + std::to_string(p.channels) + ", got " + shape_str(v_s.shape()));
  if ((p.audio > 0) != v_a.has_value()) throw std::invalid_argument("decode: audio presence does not match the model");
  if (v_a) expect_shape(*v_a, {p.audio}, "decode audio");
  if (opt.mode.forced() && (!opt.targets || opt.targets->empty()))
    throw std::invalid_argument("decode: teacher-forced and scheduled modes require targets");
  if (opt.mode.kind == DecodeKind::Sample && !opt.rng)
    throw std::invalid_argument("decode: sample mode requires a random generator");

  const std::size_t regions = v_s.size() / p.channels;
  Var spatial_keys = v_s.shape().size() == 2 ? v_s : reshape(v_s, {regions, p.channels});
  const auto keys_T = prepare_keys(g, p.att_T, V_f);
  const auto keys_S = prepare_keys(g, p.att_S, spatial_keys);

  const std::size_t steps = opt.mode.forced() ? opt.targets->size() : opt.max_steps;
  DecodeOutput out;
  Var h = g.constant(Tensor({H}));
  Var c = o_i;
  std::size_t prev = 0;
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  for (std::size_t t = 0; t < steps; ++t) {
    Var query = concat({o_i, h});
    auto att_t = soft_attention(g, p.att_T, keys_T, query);
    auto att_s = soft_attention(g, p.att_S, keys_S, query);
    Var word = t == 0 ? o_i : embedding(g.param(p.W_emb), prev);
    Var x = v_a ? concat({att_t.context, att_s.context, *v_a, word}) : concat({att_t.context, att_s.context, word});
    auto st = lstm_step(g, p.lstm, x, h, c);
    h = st.h;
    c = st.c;
    Var h_out = opt.dropout > 0.0 ? dropout(h, g.constant(dropout_mask(H, opt.dropout, opt.dropout_seed, t))) : h;
    Var logp = log_softmax(affine(h_out, g.param(p.W_out), g.param(p.b_out)));

    out.hidden.push_back(h);
    out.log_probs.push_back(logp);
    out.temporal_weights.push_back(att_t.weights.value());
    out.spatial_weights.push_back(att_s.weights.value());

    const std::size_t best = argmax_lowest(logp.value());
    switch (opt.mode.kind) {
      case DecodeKind::TeacherForced:
        out.tokens.push_back(best);
        prev = (*opt.targets)[t];
        break;
      case DecodeKind::Scheduled:
        out.tokens.push_back(best);
        prev = (*opt.targets)[t];
        if (opt.mode.p > 0.0) {
          auto rng = step_rng(opt.dropout_seed, t, 0x55u);
          if (u01(rng) < opt.mode.p) prev = sample_token(logp.value(), rng);
        }
        break;
      case DecodeKind::Greedy:
        prev = best;
        out.tokens.push_back(prev);
        break;
      case DecodeKind::Sample:
        prev = sample_token(logp.value(), *opt.rng);
        out.tokens.push_back(prev);
        break;
    }
    if (!opt.mode.forced() && prev == Vocabulary::kEos) break;
  }
  return out;
}

}  // namespace wit
