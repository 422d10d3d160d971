// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>

#include "wit/encoder/refocus.hpp"

namespace wit {

/// Soft attention over R keys: a_i = W_beta tanh(q W_h * k_i W_v_beta) + b_beta.
struct AttentionParams {
  ParamId W_h, W_v_beta, W_beta, b_beta;
  std::size_t query = 0, key = 0, dim = 0;

  static AttentionParams create(ParamStore& store, const std::string& prefix, std::size_t query, std::size_t key,
                                std::size_t dim, std::mt19937_64& rng) {
    AttentionParams p;
    p.query = query;
    p.key = key;
    p.dim = dim;
    p.W_h = store.add(prefix + "W_h", uniform_init({query, dim}, query, rng));
    p.W_v_beta = store.add(prefix + "W_v_beta", uniform_init({key, dim}, key, rng));
    p.W_beta = store.add(prefix + "W_beta", uniform_init({dim, 1}, dim, rng));
    p.b_beta = store.add(prefix + "b_beta", Tensor({1}));
    return p;
  }
};

struct AttentionOutput {
  Var context;  // [C]
  Var weights;  // [R]
};

inline ProjectedKeys prepare_keys(Graph& g, const AttentionParams& p, Var keys) {
  if (keys.shape().size() != 2 || keys.shape()[1] != p.key)
    throw ShapeError("soft_attention: keys expected R x " + std::to_string(p.key) + ", got " + shape_str(keys.shape()));
  return project_keys(g, p.W_v_beta, keys);
}

inline AttentionOutput soft_attention(Graph& g, const AttentionParams& p, const ProjectedKeys& keys, Var query) {
  if (query.shape() != Shape{p.query})
    throw ShapeError("soft_attention: query expected " + shape_str({p.query}) + ", got " + shape_str(query.shape()));
  Var w = softmax(multiplicative_tanh_scores(g, p.W_h, p.W_beta, p.b_beta, keys, query));
  return {matmul(w, keys.keys), w};
}

inline AttentionOutput soft_attention(Graph& g, const AttentionParams& p, Var keys, Var query) {
  return soft_attention(g, p, prepare_keys(g, p, keys), query);
}

}  // namespace wit
