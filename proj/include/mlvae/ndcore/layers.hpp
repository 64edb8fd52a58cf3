#pragma once

#include <random>
#include <string>
#include <vector>

#include "mlvae/ndcore/param_store.hpp"

namespace mlvae::nd {

// Weight [out x in] and bias [out].
struct Linear {
  ParamId weight, bias;
  std::size_t in = 0, out = 0;
};

// Fused LSTM cell. Weight [4H x (in + H)], bias [4H]; gate blocks ordered input, forget, candidate, output.
struct Lstm {
  ParamId weight, bias;
  std::size_t in = 0, hidden = 0;
};

// One filter bank per window width; weight for width w is [filters x (w * in)].
struct Conv1d {
  std::vector<std::size_t> widths;
  std::vector<ParamId> weights, biases;
  std::size_t in = 0, filters = 0;
  std::size_t out_dim() const { return widths.size() * filters; }
  std::size_t max_width() const;
};

struct Embedding {
  ParamId table;
  std::size_t vocab = 0, dim = 0;
};

// Field-default initialization: uniform [-0.08, 0.08] weights, zero biases, forget bias +1.
inline constexpr double kInitScale = 0.08;
inline constexpr double kForgetBias = 1.0;

template <typename T>
Linear make_linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
                   double scale = kInitScale);

template <typename T>
Lstm make_lstm(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t hidden, std::mt19937_64& rng,
               double scale = kInitScale);

template <typename T>
Conv1d make_conv1d(ParamStore<T>& store, const std::string& name, std::size_t in, std::vector<std::size_t> widths,
                   std::size_t filters, std::mt19937_64& rng, double scale = kInitScale);

template <typename T>
Embedding make_embedding(ParamStore<T>& store, const std::string& name, std::size_t vocab, std::size_t dim,
                         std::mt19937_64& rng, double scale = kInitScale);

}  // namespace mlvae::nd
