#pragma once

#include <cstdint>
#include <vector>

#include "mlvae/ndcore/param_store.hpp"

namespace mlvae::nd {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected adaptive-moment optimizer. Moment buffers are allocated on the first update.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Applies one update from the accumulated gradients, then zeroes them.
  // Throws NumericError naming the first parameter with a non-finite gradient.
  void update(ParamStore<T>& store);

  std::uint64_t step() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

// Rescales all gradients so their joint L2 norm is at most `max_norm`. Returns the norm before clipping.
template <typename T>
double clip_global_norm(ParamStore<T>& store, double max_norm);

}  // namespace mlvae::nd
