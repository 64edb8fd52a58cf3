#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mlvae/ndcore/dense_array.hpp"

namespace mlvae::nd {

// Index of an entry inside a ParamStore. Stable for the lifetime of the store.
struct ParamId {
  std::uint32_t index = UINT32_MAX;
  bool valid() const { return index != UINT32_MAX; }
  bool operator==(const ParamId&) const = default;
};

enum class Init { Zeros, Uniform, Constant };

struct InitSpec {
  Init kind = Init::Uniform;
  double scale = 0.08;  // half-width for Uniform, the value for Constant
};

template <typename T>
struct ParamEntry {
  std::string name;
  DenseArray<T> value;
  DenseArray<T> grad;
};

// Named learnable arrays with gradient accumulators, iterated in insertion order.
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;

  ParamId add(std::string name, Shape shape, InitSpec init, std::mt19937_64& rng);
  ParamId add(std::string name, DenseArray<T> value);

  bool contains(std::string_view name) const;
  ParamId id(std::string_view name) const;

  ParamEntry<T>& entry(ParamId id) { return entries_.at(id.index); }
  const ParamEntry<T>& entry(ParamId id) const { return entries_.at(id.index); }
  DenseArray<T>& value(ParamId id) { return entries_.at(id.index).value; }
  const DenseArray<T>& value(ParamId id) const { return entries_.at(id.index).value; }
  DenseArray<T>& grad(ParamId id) { return entries_.at(id.index).grad; }
  DenseArray<T>& value(std::string_view name) { return value(id(name)); }
  const DenseArray<T>& value(std::string_view name) const { return value(id(name)); }

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  std::vector<ParamEntry<T>>& entries() { return entries_; }
  const std::vector<ParamEntry<T>>& entries() const { return entries_; }

  void zero_grad();
  // Sets every value in entries whose name starts with `prefix` to zero.
  void zero_values(std::string_view prefix = "");

 private:
  std::vector<ParamEntry<T>> entries_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

}  // namespace mlvae::nd
