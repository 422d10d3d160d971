// SPDX-License-Identifier: Apache-2.0
//
// Named tensor container.
//
//   magic    4 bytes  "WITC"
//   version  u32
//   count    u64
//   count x { name_len u32, name bytes (UTF-8), rank u32, extents u64[rank],
//             data f64[prod(extents)] }
//
// All integers and floats are little-endian.
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "wit/autodiff/params.hpp"
#include "wit/autodiff/tensor.hpp"

namespace wit {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::array<char, 4> kContainerMagic = {'W', 'I', 'T', 'C'};
inline constexpr std::uint32_t kContainerVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

namespace detail {

template <typename T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  os.write(b.data(), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const char* what) {
  std::array<char, sizeof(T)> b;
  if (!is.read(b.data(), sizeof(T))) throw FormatError(std::string("truncated container while reading ") + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

}  // namespace detail

inline void write_container(std::ostream& os, const NamedTensors& entries) {
  os.write(kContainerMagic.data(), kContainerMagic.size());
  detail::put_le<std::uint32_t>(os, kContainerVersion);
  detail::put_le<std::uint64_t>(os, entries.size());
  for (const auto& [name, t] : entries) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) detail::put_le<std::uint64_t>(os, e);
    for (double v : t.values()) detail::put_le<double>(os, v);
  }
  if (!os) throw std::runtime_error("failed writing tensor container");
}

inline NamedTensors read_container(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size())) throw FormatError("truncated container: missing magic");
  if (magic != kContainerMagic) throw FormatError("bad container magic");
  const auto version = detail::get_le<std::uint32_t>(is, "version");
  if (version != kContainerVersion)
    throw FormatError("unsupported container version " + std::to_string(version));
  const auto count = detail::get_le<std::uint64_t>(is, "entry count");
  NamedTensors out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = detail::get_le<std::uint32_t>(is, "name length");
    std::string name(len, '\0');
    if (len && !is.read(name.data(), len)) throw FormatError("truncated container while reading name");
    const auto rank = detail::get_le<std::uint32_t>(is, "rank");
    if (rank == 0 || rank > 8) throw FormatError("implausible rank " + std::to_string(rank) + " for " + name);
    Shape shape(rank);
    for (auto& e : shape) {
      e = detail::get_le<std::uint64_t>(is, "extent");
      if (e == 0 || e > (1ull << 32)) throw FormatError("implausible extent in " + name);
    }
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = detail::get_le<double>(is, "tensor data");
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

inline void save_container(const std::string& path, const NamedTensors& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_container(os, entries);
}

inline NamedTensors load_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return read_container(is);
}

inline NamedTensors to_named(const ParamStore& store) {
  NamedTensors out;
  for (ParamId i = 0; i < store.size(); ++i) out.emplace_back(store.name(i), store.value(i));
  return out;
}

inline void save_params(const ParamStore& store, const std::string& path) { save_container(path, to_named(store)); }

/// Overwrites every parameter of `store` from the file. Names and shapes
/// must match exactly.
inline void load_params(ParamStore& store, const std::string& path) {
  const auto entries = load_container(path);
  if (entries.size() != store.size())
    throw FormatError("checkpoint has " + std::to_string(entries.size()) + " tensors, model expects " +
                      std::to_string(store.size()));
  for (const auto& [name, t] : entries) {
    if (!store.contains(name)) throw FormatError("checkpoint tensor not in model: " + name);
    Tensor& dst = store.value(store.id(name));
    if (dst.shape() != t.shape())
      throw FormatError("shape mismatch for " + name + ": checkpoint " + shape_str(t.shape()) + ", model " +
                        shape_str(dst.shape()));
    dst = t;
  }
}

}  // namespace wit
