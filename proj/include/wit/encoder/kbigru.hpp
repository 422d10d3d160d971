// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <stdexcept>
#include <string>

#include "wit/encoder/gru.hpp"

namespace wit {

/// Key-frame bidirectional GRU: `left` runs right-to-left over frames
/// i_key..0, `right` runs left-to-right over i_key..K-1, and the two
/// terminal states are merged by tanh([h_left_0, h_right_{K-1}] W_c + b_c).
struct KBiGruParams {
  GruParams left;
  GruParams right;
  ParamId W_c, b_c;

  std::size_t hidden() const { return left.hidden; }

  static KBiGruParams create(ParamStore& store, std::size_t input, std::size_t hidden, std::mt19937_64& rng) {
    KBiGruParams p;
    p.left = GruParams::create(store, "gru_left.", input, hidden, rng);
    p.right = GruParams::create(store, "gru_right.", input, hidden, rng);
    p.W_c = store.add("W_c", uniform_init({2 * hidden, hidden}, 2 * hidden, rng));
    p.b_c = store.add("b_c", Tensor({hidden}));
    return p;
  }
};

struct KBiGruOutput {
  Var combined;
  Var left_end;   // left GRU state after frame 0
  Var right_end;  // right GRU state after frame K-1
};

/// Row `k` of a K x C constant as a graph node.
inline Var frame(Var V_f, std::size_t k) {
  return reshape(slice(V_f, 0, k, k + 1), {V_f.shape()[1]});
}

inline KBiGruOutput kbigru_encode(Graph& g, const KBiGruParams& p, Var V_f, std::size_t i_key) {
  if (V_f.shape().size() != 2) throw ShapeError("kbigru_encode: V_f must be K x C, got " + shape_str(V_f.shape()));
  const std::size_t K = V_f.shape()[0];
  if (i_key >= K)
    throw std::out_of_range("kbigru_encode: key frame " + std::to_string(i_key) + " outside [0, " +
                            std::to_string(K - 1) + "]");
  const std::size_t H = p.hidden();
  if (p.right.hidden != H) throw ShapeError("kbigru_encode: direction hidden sizes differ");

  Var h_left = g.constant(Tensor({H}));
  for (std::size_t i = i_key + 1; i-- > 0;) h_left = gru_step(g, p.left, frame(V_f, i), h_left);
  Var h_right = g.constant(Tensor({H}));
  for (std::size_t j = i_key; j < K; ++j) h_right = gru_step(g, p.right, frame(V_f, j), h_right);

  Var combined = tanh(affine(concat({h_left, h_right}), g.param(p.W_c), g.param(p.b_c)));
  return {combined, h_left, h_right};
}

}  // namespace wit
