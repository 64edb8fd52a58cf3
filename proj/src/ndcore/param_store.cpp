#include "mlvae/ndcore/param_store.hpp"

#include <algorithm>

namespace mlvae::nd {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += " x ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

template <typename T>
ParamId ParamStore<T>::add(std::string name, Shape shape, InitSpec init, std::mt19937_64& rng) {
  DenseArray<T> value(std::move(shape));
  switch (init.kind) {
    case Init::Zeros:
      break;
    case Init::Constant:
      value.fill(static_cast<T>(init.scale));
      break;
    case Init::Uniform: {
      std::uniform_real_distribution<double> dist(-init.scale, init.scale);
      for (auto& v : value.data()) v = static_cast<T>(dist(rng));
      break;
    }
  }
  return add(std::move(name), std::move(value));
}

template <typename T>
ParamId ParamStore<T>::add(std::string name, DenseArray<T> value) {
  if (index_.contains(name)) throw UsageError("ParamStore: duplicate parameter name '" + name + "'");
  const auto idx = static_cast<std::uint32_t>(entries_.size());
  DenseArray<T> grad(value.shape());
  index_.emplace(name, idx);
  entries_.push_back({std::move(name), std::move(value), std::move(grad)});
  return ParamId{idx};
}

template <typename T>
bool ParamStore<T>::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

template <typename T>
ParamId ParamStore<T>::id(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw UsageError("ParamStore: unknown parameter '" + std::string(name) + "'");
  return ParamId{it->second};
}

template <typename T>
std::size_t ParamStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.grad.fill(T{0});
}

template <typename T>
void ParamStore<T>::zero_values(std::string_view prefix) {
  for (auto& e : entries_) {
    if (std::string_view(e.name).starts_with(prefix)) e.value.fill(T{0});
  }
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace mlvae::nd
