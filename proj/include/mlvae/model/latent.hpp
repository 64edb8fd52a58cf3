#pragma once

#include <random>
#include <span>
#include <vector>

#include "mlvae/model/config.hpp"
#include "mlvae/ndcore/tape.hpp"

namespace mlvae {

// Diagonal Gaussian as tape variables.
struct GaussianVars {
  nd::Var mean, log_var;
};

// Diagonal Gaussian as plain values.
template <typename T>
struct GaussianParams {
  std::vector<T> mean, log_var;
};

template <typename T>
GaussianParams<T> read_gaussian(const nd::Tape<T>& tape, GaussianVars g) {
  return {tape.value(g.mean), tape.value(g.log_var)};
}

template <typename T>
GaussianVars gaussian_constant(nd::Tape<T>& tape, const GaussianParams<T>& g) {
  return {tape.constant(g.mean, g.mean.size()), tape.constant(g.log_var, g.log_var.size())};
}

// Seeded standard-normal draws.
template <typename T>
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed) : rng_(seed) {}
  std::vector<T> normal(std::size_t d) {
    std::vector<T> out(d);
    for (auto& v : out) v = static_cast<T>(dist_(rng_));
    return out;
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> dist_;
};

// mean + exp(log_var / 2) * noise, differentiable in mean and log_var.
template <typename T>
nd::Var sample(nd::Tape<T>& tape, GaussianVars p, std::span<const T> noise) {
  return tape.reparameterize(p.mean, p.log_var, noise);
}

// KL(q || N(0, I)).
template <typename T>
nd::Var kl_standard(nd::Tape<T>& tape, GaussianVars q) {
  return tape.kl_standard(q.mean, q.log_var);
}

// KL(q || p) for diagonal Gaussians of equal dimension.
template <typename T>
nd::Var kl_gaussians(nd::Tape<T>& tape, GaussianVars q, GaussianVars p) {
  return tape.kl_gaussians(q.mean, q.log_var, p.mean, p.log_var);
}

struct JointKl {
  nd::Var total, inner, outer;
};

// Learned conditional prior p(z1 | z2): one ReLU hidden layer, then mean and clamped log-variance heads.
template <typename T>
class PriorNetwork {
 public:
  PriorNetwork() = default;
  PriorNetwork(nd::ParamStore<T>& store, const ModelConfig& config, std::mt19937_64& rng);

  GaussianVars conditional(nd::Tape<T>& tape, nd::Var z2) const;

  // outer = KL(q2 || N(0, I)); inner = KL(q1 || p(z1 | z2_sample)), a single-sample
  // estimate of its expectation under q2; total = inner + outer.
  JointKl joint_kl(nd::Tape<T>& tape, GaussianVars q1, GaussianVars q2, nd::Var z2_sample) const;

 private:
  nd::Linear hidden_, mean_, log_var_;
  T lo_ = -8, hi_ = 8;
};

}  // namespace mlvae
