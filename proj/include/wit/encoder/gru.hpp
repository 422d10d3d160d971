// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>

#include "wit/autodiff/graph.hpp"
#include "wit/autodiff/params.hpp"

namespace wit {

inline void expect_shape(Var v, const Shape& want, const char* what) {
  if (v.shape() != want)
    throw ShapeError(std::string(what) + ": expected " + shape_str(want) + ", got " + shape_str(v.shape()));
}

/// Standard GRU cell. Weights are stored [in, out].
///
///   z  = sigmoid(x W_xz + h W_hz + b_z)
///   r  = sigmoid(x W_xr + h W_hr + b_r)
///   n  = tanh(x W_xn + (r * h) W_hn + b_n)
///   h' = (1 - z) * n + z * h
struct GruParams {
  ParamId W_xz, W_hz, b_z;
  ParamId W_xr, W_hr, b_r;
  ParamId W_xn, W_hn, b_n;
  std::size_t input = 0, hidden = 0;

  static GruParams create(ParamStore& store, const std::string& prefix, std::size_t input, std::size_t hidden,
                          std::mt19937_64& rng) {
    GruParams p;
    p.input = input;
    p.hidden = hidden;
    auto w = [&](const char* n, std::size_t in) {
      return store.add(prefix + n, uniform_init({in, hidden}, hidden, rng));
    };
    auto b = [&](const char* n) { return store.add(prefix + n, Tensor({hidden})); };
    p.W_xz = w("W_xz", input);
    p.W_hz = w("W_hz", hidden);
    p.b_z = b("b_z");
    p.W_xr = w("W_xr", input);
    p.W_hr = w("W_hr", hidden);
    p.b_r = b("b_r");
    p.W_xn = w("W_xn", input);
    p.W_hn = w("W_hn", hidden);
    p.b_n = b("b_n");
    return p;
  }
};

inline Var gru_step(Graph& g, const GruParams& p, Var x, Var h_prev) {
  expect_shape(x, {p.input}, "gru_step input");
  expect_shape(h_prev, {p.hidden}, "gru_step hidden state");
  Var z = sigmoid(add(add(matmul(x, g.param(p.W_xz)), matmul(h_prev, g.param(p.W_hz))), g.param(p.b_z)));
  Var r = sigmoid(add(add(matmul(x, g.param(p.W_xr)), matmul(h_prev, g.param(p.W_hr))), g.param(p.b_r)));
  Var n = tanh(add(add(matmul(x, g.param(p.W_xn)), matmul(mul(r, h_prev), g.param(p.W_hn))), g.param(p.b_n)));
  return add(mul(one_minus(z), n), mul(z, h_prev));
}

}  // namespace wit
