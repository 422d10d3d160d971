// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>

#include "wit/encoder/gru.hpp"

namespace wit {

/// LSTM cell with the four gate maps fused column-wise in (i, f, o, g) order.
struct LstmParams {
  ParamId W_x, W_h, b;
  std::size_t input = 0, hidden = 0;

  static LstmParams create(ParamStore& store, const std::string& prefix, std::size_t input, std::size_t hidden,
                           std::mt19937_64& rng) {
    LstmParams p;
    p.input = input;
    p.hidden = hidden;
    p.W_x = store.add(prefix + "W_x", uniform_init({input, 4 * hidden}, hidden, rng));
    p.W_h = store.add(prefix + "W_h", uniform_init({hidden, 4 * hidden}, hidden, rng));
    p.b = store.add(prefix + "b", Tensor({4 * hidden}));
    return p;
  }
};

struct LstmState {
  Var h;
  Var c;
};

inline LstmState lstm_step(Graph& g, const LstmParams& p, Var x, Var h_prev, Var c_prev) {
  expect_shape(x, {p.input}, "lstm_step input");
  expect_shape(h_prev, {p.hidden}, "lstm_step hidden state");
  expect_shape(c_prev, {p.hidden}, "lstm_step cell state");
  const std::size_t H = p.hidden;
  Var pre = add(add(matmul(x, g.param(p.W_x)), matmul(h_prev, g.param(p.W_h))), g.param(p.b));
  Var i = sigmoid(slice(pre, 0, 0, H));
  Var f = sigmoid(slice(pre, 0, H, 2 * H));
  Var o = sigmoid(slice(pre, 0, 2 * H, 3 * H));
  Var cand = tanh(slice(pre, 0, 3 * H, 4 * H));
  Var c = add(mul(f, c_prev), mul(i, cand));
  Var h = mul(o, tanh(c));
  return {h, c};
}

}  // namespace wit
