// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "wit/autodiff/tensor.hpp"

namespace wit {

using ParamId = std::size_t;

/// Named, ordered collection of trainable tensors. Insertion order is the
/// serialization order and the gradient-buffer layout.
class ParamStore {
 public:
  ParamId add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_.emplace(name, values_.size());
    names_.push_back(name);
    values_.push_back(std::move(value));
    return values_.size() - 1;
  }

  std::size_t size() const { return values_.size(); }
  const std::string& name(ParamId id) const { return names_.at(id); }
  const std::vector<std::string>& names() const { return names_; }

  Tensor& value(ParamId id) { return values_.at(id); }
  const Tensor& value(ParamId id) const { return values_.at(id); }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  ParamId id(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, ParamId> index_;
};

/// Per-parameter gradient accumulators aligned with a ParamStore.
class GradBuffer {
 public:
  GradBuffer() = default;
  explicit GradBuffer(const ParamStore& store) {
    grads_.reserve(store.size());
    for (ParamId i = 0; i < store.size(); ++i) grads_.emplace_back(store.value(i).shape());
  }

  std::size_t size() const { return grads_.size(); }
  Tensor& operator[](ParamId id) { return grads_[id]; }
  const Tensor& operator[](ParamId id) const { return grads_[id]; }

  void zero() {
    for (auto& g : grads_) g.fill(0.0);
  }

  void add(const GradBuffer& other) {
    for (std::size_t i = 0; i < grads_.size(); ++i) {
      auto& dst = grads_[i].values();
      const auto& src = other.grads_[i].values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }

  void scale(double s) {
    for (auto& g : grads_)
      for (auto& v : g.values()) v *= s;
  }

  double global_norm() const {
    double ss = 0.0;
    for (const auto& g : grads_)
      for (double v : g.values()) ss += v * v;
    return std::sqrt(ss);
  }

 private:
  std::vector<Tensor> grads_;
};

/// Uniform(-scale, scale) initializer with scale = 1/sqrt(fan_in).
inline Tensor uniform_init(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(shape);
  const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace wit
