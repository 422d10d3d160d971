// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode differentiation over dense double tensors.
//
// A Graph owns an append-only list of nodes. Leaves are constants,
// free variables, or bound parameters from a ParamStore; every other node
// is one primitive application whose inputs precede it in the list, so the
// list order is a topological order and backward() is a single reverse
// sweep.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "wit/autodiff/params.hpp"
#include "wit/autodiff/tensor.hpp"

namespace wit {

enum class Primitive : int {
  Leaf = 0,
  MatMul,
  Add,
  Mul,
  Tanh,
  Sigmoid,
  Softmax,
  LogSoftmax,
  Log,
  Concat,
  Mean,
  Slice,
  Embedding,
  Dropout,
  Reshape,
  Sum,
  ScaleShift,
  Count_  // sentinel
};

inline constexpr std::array<std::string_view, static_cast<int>(Primitive::Count_)> kPrimitiveNames = {
    "leaf", "matmul", "add", "mul", "tanh", "sigmoid", "softmax", "log_softmax", "log",
    "concat", "mean", "slice", "embedding", "dropout", "reshape", "sum", "scale_shift"};

inline std::string_view primitive_name(Primitive p) {
  const int i = static_cast<int>(p);
  if (i < 0 || i >= static_cast<int>(Primitive::Count_))
    throw std::invalid_argument("unknown primitive id " + std::to_string(i));
  return kPrimitiveNames[static_cast<std::size_t>(i)];
}

inline Primitive primitive_from_name(std::string_view name) {
  for (std::size_t i = 1; i < kPrimitiveNames.size(); ++i)
    if (kPrimitiveNames[i] == name) return static_cast<Primitive>(i);
  throw std::invalid_argument("unknown primitive '" + std::string(name) + "'");
}

/// Static arguments of a primitive (axis, slice bounds, lookup index, ...).
struct OpAttrs {
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t index = 0;
  double scale = 1.0;
  double shift = 0.0;
  Shape shape;
  std::vector<std::size_t> axes;
};

class Graph;

/// Handle to a node in a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value()[0]; }
};

namespace detail {

struct AxisSplit {
  std::size_t outer, n, inner;
};

inline AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

enum class Bcast { Same, Row, Scalar };

inline Bcast broadcast_mode(const Shape& a, const Shape& b, std::string_view op) {
  if (a == b) return Bcast::Same;
  if (shape_numel(b) == 1) return Bcast::Scalar;
  if (b.size() == 1 && a.size() >= 2 && a.back() == b[0]) return Bcast::Row;
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " + shape_str(a));
}

inline std::size_t bcast_index(Bcast m, std::size_t i, std::size_t row) {
  switch (m) {
    case Bcast::Same: return i;
    case Bcast::Row: return i % row;
    case Bcast::Scalar: return 0;
  }
  return 0;
}

struct GemmDims {
  std::size_t m, k, n;
  Shape out;
};

inline GemmDims gemm_dims(const Shape& a, const Shape& b) {
  if (a.size() == 1 && b.size() == 2 && a[0] == b[0]) return {1, a[0], b[1], {b[1]}};
  if (a.size() == 2 && b.size() == 2 && a[1] == b[0]) return {a[0], a[1], b[1], {a[0], b[1]}};
  if (a.size() == 2 && b.size() == 1 && a[1] == b[0]) return {a[0], a[1], 1, {a[0]}};
  throw ShapeError("matmul: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Maps each flat input index to its flat index in the reduced output.
inline std::vector<std::size_t> reduce_map(const Shape& in, const std::vector<std::size_t>& axes,
                                           Shape& out_shape) {
  std::vector<bool> reduced(in.size(), false);
  for (auto a : axes) {
    if (a >= in.size()) throw ShapeError("mean: axis " + std::to_string(a) + " out of range for " + shape_str(in));
    reduced[a] = true;
  }
  out_shape.clear();
  for (std::size_t i = 0; i < in.size(); ++i)
    if (!reduced[i]) out_shape.push_back(in[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  const auto in_st = strides_of(in);
  std::vector<std::size_t> out_st(in.size(), 0);
  std::size_t acc = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    if (!reduced[i]) {
      out_st[i] = acc;
      acc *= in[i];
    }
  }
  const std::size_t total = shape_numel(in);
  std::vector<std::size_t> map(total);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat, o = 0;
    for (std::size_t d = 0; d < in.size(); ++d) {
      const std::size_t idx = rem / in_st[d];
      rem %= in_st[d];
      o += idx * out_st[d];
    }
    map[flat] = o;
  }
  return map;
}

inline void check_arity(Primitive op, std::size_t got, std::size_t want) {
  if (got != want)
    throw std::invalid_argument(std::string(primitive_name(op)) + ": expected " + std::to_string(want) +
                                " inputs, got " + std::to_string(got));
}

/// Forward rule for every primitive. Shared by Graph::apply and Graph::replay.
inline Tensor compute(Primitive op, const std::vector<const Tensor*>& in, const OpAttrs& at) {
  switch (op) {
    case Primitive::MatMul: {
      check_arity(op, in.size(), 2);
      const auto d = gemm_dims(in[0]->shape(), in[1]->shape());
      Tensor y(d.out);
      const double* a = in[0]->data();
      const double* b = in[1]->data();
      double* c = y.data();
      for (std::size_t i = 0; i < d.m; ++i)
        for (std::size_t p = 0; p < d.k; ++p) {
          const double av = a[i * d.k + p];
          if (av == 0.0) continue;
          const double* brow = b + p * d.n;
          double* crow = c + i * d.n;
          for (std::size_t j = 0; j < d.n; ++j) crow[j] += av * brow[j];
        }
      return y;
    }
    case Primitive::Add:
    case Primitive::Mul: {
      check_arity(op, in.size(), 2);
      const auto mode = broadcast_mode(in[0]->shape(), in[1]->shape(), primitive_name(op));
      const std::size_t row = in[1]->size();
      Tensor y(in[0]->shape());
      const auto& a = in[0]->values();
      const auto& b = in[1]->values();
      auto& o = y.values();
      if (op == Primitive::Add)
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[bcast_index(mode, i, row)];
      else
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[bcast_index(mode, i, row)];
      return y;
    }
    case Primitive::Tanh:
    case Primitive::Sigmoid:
    case Primitive::Log: {
      check_arity(op, in.size(), 1);
      Tensor y(in[0]->shape());
      const auto& a = in[0]->values();
      auto& o = y.values();
      for (std::size_t i = 0; i < o.size(); ++i) {
        if (op == Primitive::Tanh) o[i] = std::tanh(a[i]);
        else if (op == Primitive::Sigmoid) o[i] = sigmoid(a[i]);
        else {
          if (!(a[i] > 0.0)) throw std::domain_error("log: non-positive input " + std::to_string(a[i]));
          o[i] = std::log(a[i]);
        }
      }
      return y;
    }
    case Primitive::Softmax:
    case Primitive::LogSoftmax: {
      check_arity(op, in.size(), 1);
      const auto& s = in[0]->shape();
      if (at.axis >= s.size())
        throw ShapeError(std::string(primitive_name(op)) + ": axis " + std::to_string(at.axis) +
                         " out of range for " + shape_str(s));
      const auto sp = split_at(s, at.axis);
      Tensor y(s);
      const auto& a = in[0]->values();
      auto& o = y.values();
      for (std::size_t p = 0; p < sp.outer; ++p)
        for (std::size_t q = 0; q < sp.inner; ++q) {
          auto idx = [&](std::size_t k) { return (p * sp.n + k) * sp.inner + q; };
          double mx = -std::numeric_limits<double>::infinity();
          for (std::size_t k = 0; k < sp.n; ++k) mx = std::max(mx, a[idx(k)]);
          double z = 0.0;
          for (std::size_t k = 0; k < sp.n; ++k) z += std::exp(a[idx(k)] - mx);
          if (op == Primitive::Softmax) {
            for (std::size_t k = 0; k < sp.n; ++k) o[idx(k)] = std::exp(a[idx(k)] - mx) / z;
          } else {
            const double lse = mx + std::log(z);
            for (std::size_t k = 0; k < sp.n; ++k) o[idx(k)] = a[idx(k)] - lse;
          }
        }
      return y;
    }
    case Primitive::Concat: {
      if (in.empty()) throw std::invalid_argument("concat: no inputs");
      const auto& s0 = in[0]->shape();
      if (at.axis >= s0.size()) throw ShapeError("concat: axis out of range for " + shape_str(s0));
      Shape out = s0;
      out[at.axis] = 0;
      for (const auto* t : in) {
        const auto& s = t->shape();
        bool ok = s.size() == s0.size();
        for (std::size_t d = 0; ok && d < s.size(); ++d)
          if (d != at.axis && s[d] != s0[d]) ok = false;
        if (!ok) throw ShapeError("concat: shape " + shape_str(s) + " does not conform to " + shape_str(s0));
        out[at.axis] += s[at.axis];
      }
      Tensor y(out);
      const auto sp = split_at(out, at.axis);
      std::size_t offset = 0;
      for (const auto* t : in) {
        const std::size_t n = t->shape()[at.axis];
        for (std::size_t p = 0; p < sp.outer; ++p)
          std::copy_n(t->data() + p * n * sp.inner, n * sp.inner,
                      y.data() + (p * sp.n + offset) * sp.inner);
        offset += n;
      }
      return y;
    }
    case Primitive::Mean: {
      check_arity(op, in.size(), 1);
      Shape out;
      const auto map = reduce_map(in[0]->shape(), at.axes, out);
      Tensor y(out);
      const double denom = static_cast<double>(in[0]->size()) / static_cast<double>(y.size());
      const auto& a = in[0]->values();
      for (std::size_t i = 0; i < a.size(); ++i) y[map[i]] += a[i];
      for (auto& v : y.values()) v /= denom;
      return y;
    }
    case Primitive::Slice: {
      check_arity(op, in.size(), 1);
      const auto& s = in[0]->shape();
      if (at.axis >= s.size() || at.begin >= at.end || at.end > s[at.axis])
        throw ShapeError("slice: range [" + std::to_string(at.begin) + "," + std::to_string(at.end) +
                         ") on axis " + std::to_string(at.axis) + " invalid for " + shape_str(s));
      Shape out = s;
      out[at.axis] = at.end - at.begin;
      Tensor y(out);
      const auto sp = split_at(s, at.axis);
      const std::size_t n = at.end - at.begin;
      for (std::size_t p = 0; p < sp.outer; ++p)
        std::copy_n(in[0]->data() + (p * sp.n + at.begin) * sp.inner, n * sp.inner, y.data() + p * n * sp.inner);
      return y;
    }
    case Primitive::Embedding: {
      check_arity(op, in.size(), 1);
      const auto& s = in[0]->shape();
      if (s.size() != 2) throw ShapeError("embedding: table must be rank 2, got " + shape_str(s));
      if (at.index >= s[0])
        throw std::out_of_range("embedding: index " + std::to_string(at.index) + " outside table " + shape_str(s));
      return in[0]->row(at.index);
    }
    case Primitive::Dropout: {
      check_arity(op, in.size(), 2);
      if (in[0]->shape() != in[1]->shape())
        throw ShapeError("dropout: mask " + shape_str(in[1]->shape()) + " vs input " + shape_str(in[0]->shape()));
      Tensor y(in[0]->shape());
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = (*in[0])[i] * (*in[1])[i];
      return y;
    }
    case Primitive::Reshape: {
      check_arity(op, in.size(), 1);
      if (shape_numel(at.shape) != in[0]->size())
        throw ShapeError("reshape: " + shape_str(in[0]->shape()) + " to " + shape_str(at.shape));
      return in[0]->reshaped(at.shape);
    }
    case Primitive::Sum: {
      check_arity(op, in.size(), 1);
      double s = 0.0;
      for (double v : in[0]->values()) s += v;
      return Tensor::scalar(s);
    }
    case Primitive::ScaleShift: {
      check_arity(op, in.size(), 1);
      Tensor y(in[0]->shape());
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = at.scale * (*in[0])[i] + at.shift;
      return y;
    }
    case Primitive::Leaf:
    case Primitive::Count_:
      break;
  }
  throw std::invalid_argument("unknown primitive id " + std::to_string(static_cast<int>(op)));
}

}  // namespace detail

class Graph {
 public:
  Graph() { nodes_.reserve(256); }
  explicit Graph(const ParamStore& store) : Graph() { bind(store); }

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  void bind(const ParamStore& store) {
    store_ = &store;
    param_nodes_.assign(store.size(), -1);
  }

  Var constant(Tensor t) { return push_leaf(std::move(t), nullptr, false, -1); }
  Var variable(Tensor t) { return push_leaf(std::move(t), nullptr, true, -1); }

  /// Leaf for a bound parameter. Repeated requests return the same node so
  /// fan-out accumulates into one gradient.
  Var param(ParamId id) {
    if (!store_) throw std::logic_error("graph has no bound parameter store");
    int& slot = param_nodes_.at(id);
    if (slot < 0) slot = push_leaf(Tensor{}, &store_->value(id), true, static_cast<int>(id)).id;
    return Var{this, slot};
  }

  Var apply(Primitive op, std::span<const Var> inputs, const OpAttrs& attrs = {}) {
    std::vector<const Tensor*> vals;
    vals.reserve(inputs.size());
    bool needs_grad = false;
    for (const auto& v : inputs) {
      if (v.graph != this) throw std::invalid_argument("input belongs to a different graph");
      vals.push_back(&value_of(v.id));
      needs_grad = needs_grad || nodes_[static_cast<std::size_t>(v.id)].requires_grad;
    }
    Node n;
    n.op = op;
    n.value = detail::compute(op, vals, attrs);
    n.attrs = attrs;
    n.requires_grad = needs_grad;
    n.inputs.reserve(inputs.size());
    for (const auto& v : inputs) n.inputs.push_back(v.id);
    nodes_.push_back(std::move(n));
    if (needs_grad) ++recorded_;
    return Var{this, static_cast<int>(nodes_.size() - 1)};
  }

  Var apply(Primitive op, std::initializer_list<Var> inputs, const OpAttrs& attrs = {}) {
    return apply(op, std::span<const Var>(inputs.begin(), inputs.size()), attrs);
  }

  const Tensor& value(Var v) const { return value_of(v.id); }

  /// Accumulated gradient of a leaf after backward(), or nullptr.
  const Tensor* grad(Var v) const {
    const auto& n = nodes_.at(static_cast<std::size_t>(v.id));
    return n.grad.empty() ? nullptr : &n.grad;
  }

  bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }

  std::size_t size() const { return nodes_.size(); }
  /// Number of primitive applications that carry gradient.
  std::size_t recorded_ops() const { return recorded_; }

  /// Reverse sweep from a scalar loss. Leaf gradients accumulate across
  /// calls; call zero_grad() to reset.
  void backward(Var loss) {
    if (loss.graph != this) throw std::invalid_argument("backward: loss belongs to a different graph");
    const auto& ln = nodes_.at(static_cast<std::size_t>(loss.id));
    if (ln.value.size() != 1)
      throw ShapeError("backward: loss must be scalar, got shape " + shape_str(ln.value.shape()));
    if (!ln.requires_grad || ln.op == Primitive::Leaf)
      throw std::logic_error("backward: loss is detached from the computation record");

    for (auto& n : nodes_)
      if (n.op != Primitive::Leaf) n.grad = Tensor{};
    nodes_[static_cast<std::size_t>(loss.id)].grad = Tensor(ln.value.shape(), 1.0);

    for (int i = loss.id; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.op == Primitive::Leaf || !n.requires_grad || n.grad.empty()) continue;
      propagate(n);
      n.grad = Tensor{};
    }
  }

  void zero_grad() {
    for (auto& n : nodes_) n.grad = Tensor{};
  }

  /// Adds every bound parameter's gradient into `out`.
  void accumulate_param_grads(GradBuffer& out) const {
    for (std::size_t id = 0; id < param_nodes_.size(); ++id) {
      const int slot = param_nodes_[id];
      if (slot < 0) continue;
      const auto& g = nodes_[static_cast<std::size_t>(slot)].grad;
      if (g.empty()) continue;
      auto& dst = out[id].values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
    }
  }

  /// Recomputes every non-leaf value from the current leaf values.
  void replay() {
    for (auto& n : nodes_) {
      if (n.op == Primitive::Leaf) continue;
      std::vector<const Tensor*> vals;
      for (int id : n.inputs) vals.push_back(&value_of(id));
      n.value = detail::compute(n.op, vals, n.attrs);
    }
  }

  /// Ordered (op, inputs) view of the record, for inspection.
  std::vector<std::pair<Primitive, std::vector<int>>> record() const {
    std::vector<std::pair<Primitive, std::vector<int>>> r;
    for (const auto& n : nodes_)
      if (n.op != Primitive::Leaf && n.requires_grad) r.emplace_back(n.op, n.inputs);
    return r;
  }

 private:
  struct Node {
    Primitive op = Primitive::Leaf;
    std::vector<int> inputs;
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    OpAttrs attrs;
    bool requires_grad = false;
    int param = -1;
  };

  Var push_leaf(Tensor t, const Tensor* ext, bool requires_grad, int param) {
    Node n;
    n.value = std::move(t);
    n.external = ext;
    n.requires_grad = requires_grad;
    n.param = param;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size() - 1)};
  }

  const Tensor& value_of(int id) const {
    const auto& n = nodes_.at(static_cast<std::size_t>(id));
    return n.external ? *n.external : n.value;
  }

  Tensor& grad_slot(int id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor(value_of(id).shape());
    return n.grad;
  }

  bool wants(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  void propagate(Node& n) {
    const auto& gy = n.grad.values();
    const auto& at = n.attrs;
    switch (n.op) {
      case Primitive::MatMul: {
        const Tensor& a = value_of(n.inputs[0]);
        const Tensor& b = value_of(n.inputs[1]);
        const auto d = detail::gemm_dims(a.shape(), b.shape());
        if (wants(n.inputs[0])) {
          double* ga = grad_slot(n.inputs[0]).data();
          for (std::size_t i = 0; i < d.m; ++i)
            for (std::size_t p = 0; p < d.k; ++p) {
              double s = 0.0;
              const double* brow = b.data() + p * d.n;
              const double* grow = gy.data() + i * d.n;
              for (std::size_t j = 0; j < d.n; ++j) s += grow[j] * brow[j];
              ga[i * d.k + p] += s;
            }
        }
        if (wants(n.inputs[1])) {
          double* gb = grad_slot(n.inputs[1]).data();
          for (std::size_t i = 0; i < d.m; ++i)
            for (std::size_t p = 0; p < d.k; ++p) {
              const double av = a[i * d.k + p];
              if (av == 0.0) continue;
              const double* grow = gy.data() + i * d.n;
              double* gbrow = gb + p * d.n;
              for (std::size_t j = 0; j < d.n; ++j) gbrow[j] += av * grow[j];
            }
        }
        break;
      }
      case Primitive::Add:
      case Primitive::Mul: {
        const Tensor& a = value_of(n.inputs[0]);
        const Tensor& b = value_of(n.inputs[1]);
        const auto mode = detail::broadcast_mode(a.shape(), b.shape(), primitive_name(n.op));
        const std::size_t row = b.size();
        if (wants(n.inputs[0])) {
          auto& ga = grad_slot(n.inputs[0]).values();
          if (n.op == Primitive::Add)
            for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
          else
            for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * b[detail::bcast_index(mode, i, row)];
        }
        if (wants(n.inputs[1])) {
          auto& gb = grad_slot(n.inputs[1]).values();
          if (n.op == Primitive::Add)
            for (std::size_t i = 0; i < gy.size(); ++i) gb[detail::bcast_index(mode, i, row)] += gy[i];
          else
            for (std::size_t i = 0; i < gy.size(); ++i) gb[detail::bcast_index(mode, i, row)] += gy[i] * a[i];
        }
        break;
      }
      case Primitive::Tanh: {
        if (!wants(n.inputs[0])) break;
        auto& ga = grad_slot(n.inputs[0]).values();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      }
      case Primitive::Sigmoid: {
        if (!wants(n.inputs[0])) break;
        auto& ga = grad_slot(n.inputs[0]).values();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * n.value[i] * (1.0 - n.value[i]);
        break;
      }
      case Primitive::Log: {
        if (!wants(n.inputs[0])) break;
        const Tensor& a = value_of(n.inputs[0]);
        auto& ga = grad_slot(n.inputs[0]).values();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] / a[i];
        break;
      }
      case Primitive::Softmax:
      case Primitive::LogSoftmax: {
        if (!wants(n.inputs[0])) break;
        const auto sp = detail::split_at(n.value.shape(), at.axis);
        auto& ga = grad_slot(n.inputs[0]).values();
        const auto& y = n.value.values();
        for (std::size_t p = 0; p < sp.outer; ++p)
          for (std::size_t q = 0; q < sp.inner; ++q) {
            auto idx = [&](std::size_t k) { return (p * sp.n + k) * sp.inner + q; };
            if (n.op == Primitive::Softmax) {
              double dot = 0.0;
              for (std::size_t k = 0; k < sp.n; ++k) dot += gy[idx(k)] * y[idx(k)];
              for (std::size_t k = 0; k < sp.n; ++k) ga[idx(k)] += y[idx(k)] * (gy[idx(k)] - dot);
            } else {
              double total = 0.0;
              for (std::size_t k = 0; k < sp.n; ++k) total += gy[idx(k)];
              for (std::size_t k = 0; k < sp.n; ++k) ga[idx(k)] += gy[idx(k)] - std::exp(y[idx(k)]) * total;
            }
          }
        break;
      }
      case Primitive::Concat: {
        const auto sp = detail::split_at(n.value.shape(), at.axis);
        std::size_t offset = 0;
        for (int id : n.inputs) {
          const std::size_t w = value_of(id).shape()[at.axis];
          if (wants(id)) {
            auto& g = grad_slot(id).values();
            for (std::size_t p = 0; p < sp.outer; ++p)
              for (std::size_t k = 0; k < w * sp.inner; ++k)
                g[p * w * sp.inner + k] += gy[(p * sp.n + offset) * sp.inner + k];
          }
          offset += w;
        }
        break;
      }
      case Primitive::Mean: {
        if (!wants(n.inputs[0])) break;
        const Tensor& a = value_of(n.inputs[0]);
        Shape out;
        const auto map = detail::reduce_map(a.shape(), at.axes, out);
        const double denom = static_cast<double>(a.size()) / static_cast<double>(n.value.size());
        auto& ga = grad_slot(n.inputs[0]).values();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[map[i]] / denom;
        break;
      }
      case Primitive::Slice: {
        if (!wants(n.inputs[0])) break;
        const auto sp = detail::split_at(value_of(n.inputs[0]).shape(), at.axis);
        const std::size_t w = at.end - at.begin;
        auto& ga = grad_slot(n.inputs[0]).values();
        for (std::size_t p = 0; p < sp.outer; ++p)
          for (std::size_t k = 0; k < w * sp.inner; ++k)
            ga[(p * sp.n + at.begin) * sp.inner + k] += gy[p * w * sp.inner + k];
        break;
      }
      case Primitive::Embedding: {
        if (!wants(n.inputs[0])) break;
        auto& ga = grad_slot(n.inputs[0]);
        const std::size_t cols = ga.shape()[1];
        for (std::size_t j = 0; j < cols; ++j) ga[at.index * cols + j] += gy[j];
        break;
      }
      case Primitive::Dropout: {
        if (!wants(n.inputs[0])) break;
        const Tensor& mask = value_of(n.inputs[1]);
        auto& ga = grad_slot(n.inputs[0]).values();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * mask[i];
        break;
      }
      case Primitive::Reshape: {
        if (!wants(n.inputs[0])) break;
        auto& ga = grad_slot(n.inputs[0]).values();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        break;
      }
      case Primitive::Sum: {
        if (!wants(n.inputs[0])) break;
        auto& ga = grad_slot(n.inputs[0]).values();
        for (auto& g : ga) g += gy[0];
        break;
      }
      case Primitive::ScaleShift: {
        if (!wants(n.inputs[0])) break;
        auto& ga = grad_slot(n.inputs[0]).values();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += at.scale * gy[i];
        break;
      }
      case Primitive::Leaf:
      case Primitive::Count_:
        break;
    }
  }

  std::vector<Node> nodes_;
  const ParamStore* store_ = nullptr;
  std::vector<int> param_nodes_;
  std::size_t recorded_ = 0;
};

inline const Tensor& Var::value() const { return graph->value(*this); }

// Primitive wrappers.

inline Var matmul(Var a, Var b) { return a.graph->apply(Primitive::MatMul, {a, b}); }
inline Var add(Var a, Var b) { return a.graph->apply(Primitive::Add, {a, b}); }
inline Var mul(Var a, Var b) { return a.graph->apply(Primitive::Mul, {a, b}); }
inline Var tanh(Var a) { return a.graph->apply(Primitive::Tanh, {a}); }
inline Var sigmoid(Var a) { return a.graph->apply(Primitive::Sigmoid, {a}); }
inline Var log(Var a) { return a.graph->apply(Primitive::Log, {a}); }
inline Var sum(Var a) { return a.graph->apply(Primitive::Sum, {a}); }

inline Var softmax(Var a, std::size_t axis = 0) {
  OpAttrs at;
  at.axis = axis;
  return a.graph->apply(Primitive::Softmax, {a}, at);
}

inline Var log_softmax(Var a, std::size_t axis = 0) {
  OpAttrs at;
  at.axis = axis;
  return a.graph->apply(Primitive::LogSoftmax, {a}, at);
}

inline Var concat(std::span<const Var> parts, std::size_t axis = 0) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  OpAttrs at;
  at.axis = axis;
  return parts.front().graph->apply(Primitive::Concat, parts, at);
}

inline Var concat(std::initializer_list<Var> parts, std::size_t axis = 0) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

inline Var mean(Var a, std::vector<std::size_t> axes) {
  OpAttrs at;
  at.axes = std::move(axes);
  return a.graph->apply(Primitive::Mean, {a}, at);
}

inline Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  OpAttrs at;
  at.axis = axis;
  at.begin = begin;
  at.end = end;
  return a.graph->apply(Primitive::Slice, {a}, at);
}

/// Single element of a rank-1 tensor as a [1] tensor.
inline Var pick(Var a, std::size_t i) { return slice(a, 0, i, i + 1); }

inline Var embedding(Var table, std::size_t index) {
  OpAttrs at;
  at.index = index;
  return table.graph->apply(Primitive::Embedding, {table}, at);
}

inline Var dropout(Var a, Var mask) { return a.graph->apply(Primitive::Dropout, {a, mask}); }

inline Var reshape(Var a, Shape s) {
  OpAttrs at;
  at.shape = std::move(s);
  return a.graph->apply(Primitive::Reshape, {a}, at);
}

inline Var scale_shift(Var a, double scale, double shift) {
  OpAttrs at;
  at.scale = scale;
  at.shift = shift;
  return a.graph->apply(Primitive::ScaleShift, {a}, at);
}

/// 1 - a, elementwise.
inline Var one_minus(Var a) { return scale_shift(a, -1.0, 1.0); }
inline Var scale(Var a, double s) { return scale_shift(a, s, 0.0); }

/// x W + b for a rank-1 x and W stored as [in, out].
inline Var affine(Var x, Var w, Var b) { return add(matmul(x, w), b); }

}  // namespace wit
