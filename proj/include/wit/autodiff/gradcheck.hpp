// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "wit/autodiff/graph.hpp"

namespace wit {

/// Maps a single free input to a scalar within the supplied graph.
using ScalarFn = std::function<Var(Graph&, Var)>;
/// Builds a scalar from parameters bound into the supplied graph.
using ModelFn = std::function<Var(Graph&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<name>[<flat index>]" of the worst coordinate
};

namespace detail {

inline double eval_scalar(const Tensor& y) {
  if (y.size() != 1) throw ShapeError("gradient check: function output must be scalar, got " + shape_str(y.shape()));
  return y[0];
}

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace detail

/// max_i |analytic_i - central_difference_i| / max(1, |analytic_i|).
inline double finite_difference_check(const ScalarFn& f, const Tensor& x, double eps = 1e-5) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_check: eps must be positive");
  Tensor analytic(x.shape());
  {
    Graph g;
    Var xv = g.variable(x);
    Var y = f(g, xv);
    detail::eval_scalar(y.value());
    if (g.requires_grad(y) && y.id != xv.id) {
      g.backward(y);
      if (const Tensor* gx = g.grad(xv)) analytic = *gx;
    } else if (y.id == xv.id) {
      analytic.fill(1.0);
    }
  }
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    double fp, fm;
    {
      Graph g;
      fp = detail::eval_scalar(f(g, g.variable(probe)).value());
    }
    probe[i] = orig - eps;
    {
      Graph g;
      fm = detail::eval_scalar(f(g, g.variable(probe)).value());
    }
    probe[i] = orig;
    worst = std::max(worst, detail::rel_error(analytic[i], (fp - fm) / (2.0 * eps)));
  }
  return worst;
}

/// Same check over every coordinate of the listed parameters (all when empty).
inline GradCheckResult finite_difference_check(ParamStore& store, const ModelFn& f, double eps = 1e-5,
                                               std::vector<ParamId> only = {}) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_check: eps must be positive");
  if (only.empty())
    for (ParamId i = 0; i < store.size(); ++i) only.push_back(i);

  GradBuffer analytic(store);
  {
    Graph g(store);
    Var y = f(g);
    detail::eval_scalar(y.value());
    if (g.requires_grad(y)) {
      g.backward(y);
      g.accumulate_param_grads(analytic);
    }
  }
  auto eval = [&] {
    Graph g(store);
    return detail::eval_scalar(f(g).value());
  };
  GradCheckResult r;
  for (ParamId id : only) {
    Tensor& t = store.value(id);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      t[i] = orig + eps;
      const double fp = eval();
      t[i] = orig - eps;
      const double fm = eval();
      t[i] = orig;
      const double e = detail::rel_error(analytic[id][i], (fp - fm) / (2.0 * eps));
      if (e > r.max_rel_error) {
        r.max_rel_error = e;
        r.worst = store.name(id) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

}  // namespace wit
