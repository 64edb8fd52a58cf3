#include "mlvae/ndcore/optim.hpp"

#include <cmath>

namespace mlvae::nd {

template <typename T>
void Adam<T>::update(ParamStore<T>& store) {
  auto& entries = store.entries();
  for (const auto& e : entries) {
    for (T g : e.grad.data()) {
      if (!std::isfinite(g)) throw NumericError("adam_update: non-finite gradient in '" + e.name + "'");
    }
  }
  if (m_.size() < entries.size()) {
    for (std::size_t i = m_.size(); i < entries.size(); ++i) {
      m_.emplace_back(entries[i].value.size(), T{0});
      v_.emplace_back(entries[i].value.size(), T{0});
    }
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const T step_size = static_cast<T>(config_.lr / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(config_.eps);
  const T tb1 = static_cast<T>(b1), tb2 = static_cast<T>(b2);
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto& value = entries[p].value.data();
    auto& grad = entries[p].grad.data();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const T g = grad[i];
      m[i] = tb1 * m[i] + (T{1} - tb1) * g;
      v[i] = tb2 * v[i] + (T{1} - tb2) * g * g;
      value[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
      grad[i] = T{0};
    }
  }
}

template <typename T>
double clip_global_norm(ParamStore<T>& store, double max_norm) {
  double sq = 0;
  for (const auto& e : store.entries()) {
    for (T g : e.grad.data()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& e : store.entries()) {
      for (auto& g : e.grad.data()) g *= s;
    }
  }
  return norm;
}

template class Adam<float>;
template class Adam<double>;
template double clip_global_norm<float>(ParamStore<float>&, double);
template double clip_global_norm<double>(ParamStore<double>&, double);

}  // namespace mlvae::nd
