#include "mlvae/ndcore/layers.hpp"

#include <algorithm>

namespace mlvae::nd {

std::size_t Conv1d::max_width() const {
  return widths.empty() ? 0 : *std::max_element(widths.begin(), widths.end());
}

template <typename T>
Linear make_linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                   std::mt19937_64& rng, double scale) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = store.add(name + ".w", {out, in}, {Init::Uniform, scale}, rng);
  l.bias = store.add(name + ".b", {out}, {Init::Zeros}, rng);
  return l;
}

template <typename T>
Lstm make_lstm(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t hidden,
               std::mt19937_64& rng, double scale) {
  Lstm l;
  l.in = in;
  l.hidden = hidden;
  l.weight = store.add(name + ".w", {4 * hidden, in + hidden}, {Init::Uniform, scale}, rng);
  l.bias = store.add(name + ".b", {4 * hidden}, {Init::Zeros}, rng);
  auto& b = store.value(l.bias);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = static_cast<T>(kForgetBias);
  return l;
}

template <typename T>
Conv1d make_conv1d(ParamStore<T>& store, const std::string& name, std::size_t in, std::vector<std::size_t> widths,
                   std::size_t filters, std::mt19937_64& rng, double scale) {
  if (widths.empty() || filters == 0) throw ConfigError("conv1d '" + name + "': needs at least one width and filter");
  Conv1d c;
  c.in = in;
  c.filters = filters;
  c.widths = std::move(widths);
  for (auto w : c.widths) {
    if (w == 0) throw ConfigError("conv1d '" + name + "': window width must be positive");
    const auto tag = name + ".w" + std::to_string(w);
    c.weights.push_back(store.add(tag + ".w", {filters, w * in}, {Init::Uniform, scale}, rng));
    c.biases.push_back(store.add(tag + ".b", {filters}, {Init::Zeros}, rng));
  }
  return c;
}

template <typename T>
Embedding make_embedding(ParamStore<T>& store, const std::string& name, std::size_t vocab, std::size_t dim,
                         std::mt19937_64& rng, double scale) {
  Embedding e;
  e.vocab = vocab;
  e.dim = dim;
  e.table = store.add(name, {vocab, dim}, {Init::Uniform, scale}, rng);
  return e;
}

#define MLVAE_INSTANTIATE(T)                                                                                  \
  template Linear make_linear<T>(ParamStore<T>&, const std::string&, std::size_t, std::size_t,               \
                                 std::mt19937_64&, double);                                                           \
  template Lstm make_lstm<T>(ParamStore<T>&, const std::string&, std::size_t, std::size_t, std::mt19937_64&, double); \
  template Conv1d make_conv1d<T>(ParamStore<T>&, const std::string&, std::size_t, std::vector<std::size_t>,  \
                                 std::size_t, std::mt19937_64&, double);                                              \
  template Embedding make_embedding<T>(ParamStore<T>&, const std::string&, std::size_t, std::size_t,         \
                                       std::mt19937_64&, double);
MLVAE_INSTANTIATE(float)
MLVAE_INSTANTIATE(double)
#undef MLVAE_INSTANTIATE

}  // namespace mlvae::nd
