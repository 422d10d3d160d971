// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "wit/autodiff/graph.hpp"
#include "wit/autodiff/params.hpp"

namespace wit {

/// Keys (R x C) mapped through the key projection once, reusable across queries.
struct ProjectedKeys {
  Var keys;       // R x C
  Var projected;  // R x D
};

inline ProjectedKeys project_keys(Graph& g, ParamId W_key, Var keys) {
  if (keys.shape().size() != 2) throw ShapeError("attention keys must be rank 2, got " + shape_str(keys.shape()));
  return {keys, matmul(keys, g.param(W_key))};
}

/// s_i = w . tanh((q W_query) * (k_i W_key)) + b for every key row; shape [R].
inline Var multiplicative_tanh_scores(Graph& g, ParamId W_query, ParamId w_score, ParamId b_score,
                                      const ProjectedKeys& keys, Var query) {
  Var q = matmul(query, g.param(W_query));
  Var s = matmul(tanh(mul(keys.projected, q)), g.param(w_score));
  s = add(s, g.param(b_score));
  return reshape(s, {keys.projected.shape()[0]});
}

/// Lowest index among maximal entries.
inline std::size_t argmax_lowest(const Tensor& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = i;
  return best;
}

struct RefocusParams {
  ParamId W_o, W_v, W_alpha, b_alpha;
  std::size_t query = 0, feature = 0, dim = 0;

  static RefocusParams create(ParamStore& store, std::size_t hidden, std::size_t channels, std::size_t dim,
                              std::mt19937_64& rng) {
    RefocusParams p;
    p.query = hidden;
    p.feature = channels;
    p.dim = dim;
    p.W_o = store.add("W_o", uniform_init({hidden, dim}, hidden, rng));
    p.W_v = store.add("W_v", uniform_init({channels, dim}, channels, rng));
    p.W_alpha = store.add("W_alpha", uniform_init({dim, 1}, dim, rng));
    p.b_alpha = store.add("b_alpha", Tensor({1}));
    return p;
  }
};

struct RefocusOutput {
  std::size_t i_key = 0;
  Var scores;  // a, [K]
  Var alpha;   // softmax(a), [K]
};

/// Scores every frame against o1 and picks the most probable one.
inline RefocusOutput refocus(Graph& g, const RefocusParams& p, Var o1, Var V_f) {
  if (o1.shape() != Shape{p.query})
    throw ShapeError("refocus: o1 expected " + shape_str({p.query}) + ", got " + shape_str(o1.shape()));
  if (V_f.shape().size() != 2 || V_f.shape()[1] != p.feature)
    throw ShapeError("refocus: V_f expected K x " + std::to_string(p.feature) + ", got " + shape_str(V_f.shape()));
  RefocusOutput r;
  r.scores = multiplicative_tanh_scores(g, p.W_o, p.W_alpha, p.b_alpha, project_keys(g, p.W_v, V_f), o1);
  r.alpha = softmax(r.scores);
  r.i_key = argmax_lowest(r.alpha.value());
  return r;
}

}  // namespace wit
