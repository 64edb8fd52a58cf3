#include "mlvae/ndcore/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mlvae::nd {

namespace {

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= 0) {
    const T e = std::exp(-x);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

std::string dims(std::size_t a, std::size_t b) { return std::to_string(a) + " vs " + std::to_string(b); }

}  // namespace

template <typename T>
void Tape<T>::clear() {
  nodes_.clear();
  ++epoch_;
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.epoch != epoch_ || v.index >= nodes_.size()) throw UsageError("Tape: variable is not recorded on this tape");
  return nodes_[v.index];
}

template <typename T>
const std::vector<T>& Tape<T>::value(Var v) const {
  return node(v).value;
}

template <typename T>
T Tape<T>::scalar(Var v) const {
  const auto& n = node(v);
  if (n.value.size() != 1) throw DimensionError("Tape: scalar requested from non-scalar value");
  return n.value[0];
}

template <typename T>
std::size_t Tape<T>::rows(Var v) const {
  return node(v).rows;
}

template <typename T>
std::size_t Tape<T>::cols(Var v) const {
  return node(v).cols;
}

template <typename T>
Var Tape<T>::push(std::vector<T> value, std::size_t rows, std::size_t cols, bool requires_grad) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(value);
  n.requires_grad = recording_ && requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1), epoch_};
}

template <typename T>
std::vector<T>& Tape<T>::grad_of(std::uint32_t index) {
  auto& n = nodes_[index];
  if (n.grad.empty()) n.grad.assign(n.value.size(), T{0});
  return n.grad;
}

template <typename T>
void Tape<T>::on_backward(Var out, std::function<void()> fn) {
  if (nodes_[out.index].requires_grad) nodes_[out.index].back = std::move(fn);
}

template <typename T>
void Tape<T>::require_finite(const std::vector<T>& v, const char* op) const {
  for (T x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite value");
  }
}

// ---------------------------------------------------------------- leaves

template <typename T>
Var Tape<T>::constant(std::span<const T> values, std::size_t rows) {
  if (rows == 0) rows = values.size();
  if (values.empty() || rows == 0 || values.size() % rows != 0) {
    throw DimensionError("constant: cannot shape " + std::to_string(values.size()) + " values into " +
                         std::to_string(rows) + " rows");
  }
  return push(std::vector<T>(values.begin(), values.end()), rows, values.size() / rows, false);
}

template <typename T>
Var Tape<T>::scalar_constant(T v) {
  return push({v}, 1, 1, false);
}

template <typename T>
Var Tape<T>::param(ParamId id) {
  const auto& value = store_.value(id);
  Var out = push(value.data(), value.rows(), value.size() / value.rows(), true);
  on_backward(out, [this, id, o = out.index] {
    auto& g = store_.grad(id);
    const auto& go = nodes_[o].grad;
    for (std::size_t i = 0; i < go.size(); ++i) g[i] += go[i];
  });
  return out;
}

// ---------------------------------------------------------------- neural ops

template <typename T>
Var Tape<T>::linear(Var x, const Linear& layer) {
  const auto& xv = node(x).value;
  const auto& w = store_.value(layer.weight);
  const auto& b = store_.value(layer.bias);
  const std::size_t in = w.cols(), out = w.rows();
  if (xv.size() != in || b.size() != out) {
    throw DimensionError("linear '" + store_.entry(layer.weight).name + "': input " + dims(xv.size(), in));
  }
  std::vector<T> y(b.data());
  const T* wp = w.data().data();
  const T* xp = xv.data();
  for (std::size_t r = 0; r < out; ++r) {
    T acc = 0;
    const T* row = wp + r * in;
    for (std::size_t c = 0; c < in; ++c) acc += row[c] * xp[c];
    y[r] += acc;
  }
  Var result = push(std::move(y), out, 1, true);
  on_backward(result, [this, x, layer, o = result.index, in, out] {
    const auto& gy = nodes_[o].grad;
    const auto& xv = nodes_[x.index].value;
    auto& gw = store_.grad(layer.weight);
    auto& gb = store_.grad(layer.bias);
    T* gwp = gw.data().data();
    for (std::size_t r = 0; r < out; ++r) {
      const T g = gy[r];
      gb[r] += g;
      if (g == T{0}) continue;
      T* row = gwp + r * in;
      for (std::size_t c = 0; c < in; ++c) row[c] += g * xv[c];
    }
    if (nodes_[x.index].requires_grad) {
      auto& gx = grad_of(x.index);
      const T* wp = store_.value(layer.weight).data().data();
      for (std::size_t r = 0; r < out; ++r) {
        const T g = gy[r];
        if (g == T{0}) continue;
        const T* row = wp + r * in;
        for (std::size_t c = 0; c < in; ++c) gx[c] += g * row[c];
      }
    }
  });
  return result;
}

template <typename T>
LstmState Tape<T>::lstm_step(Var input, LstmState state, const Lstm& layer) {
  const auto& xv = node(input).value;
  const auto& hv = node(state.h).value;
  const auto& cv = node(state.c).value;
  const std::size_t H = layer.hidden, in = layer.in, K = in + H;
  const auto& w = store_.value(layer.weight);
  const auto& b = store_.value(layer.bias);
  const auto& name = store_.entry(layer.weight).name;
  if (xv.size() != in) throw DimensionError("lstm_step '" + name + "': input " + dims(xv.size(), in));
  if (hv.size() != H || cv.size() != H) throw DimensionError("lstm_step '" + name + "': state " + dims(hv.size(), H));
  if (w.rows() != 4 * H || w.cols() != K) throw DimensionError("lstm_step '" + name + "': weight shape");

  std::vector<T> joined(K);
  std::copy(xv.begin(), xv.end(), joined.begin());
  std::copy(hv.begin(), hv.end(), joined.begin() + static_cast<std::ptrdiff_t>(in));

  std::vector<T> gates(b.data());
  const T* wp = w.data().data();
  for (std::size_t r = 0; r < 4 * H; ++r) {
    T acc = 0;
    const T* row = wp + r * K;
    for (std::size_t c = 0; c < K; ++c) acc += row[c] * joined[c];
    gates[r] += acc;
  }
  std::vector<T> packed(2 * H);
  std::vector<T> tanh_c(H);
  for (std::size_t j = 0; j < H; ++j) {
    gates[j] = sigmoid_scalar(gates[j]);
    gates[H + j] = sigmoid_scalar(gates[H + j]);
    gates[2 * H + j] = std::tanh(gates[2 * H + j]);
    gates[3 * H + j] = sigmoid_scalar(gates[3 * H + j]);
    const T c_new = gates[H + j] * cv[j] + gates[j] * gates[2 * H + j];
    tanh_c[j] = std::tanh(c_new);
    packed[j] = gates[3 * H + j] * tanh_c[j];
    packed[H + j] = c_new;
  }
  std::vector<T> c_prev(cv);
  Var cell = push(std::move(packed), 2 * H, 1, true);
  on_backward(cell, [this, input, state, layer, o = cell.index, H, in, K, joined = std::move(joined),
                     gates = std::move(gates), tanh_c = std::move(tanh_c), c_prev = std::move(c_prev)] {
    const auto& g = nodes_[o].grad;
    std::vector<T> dz(4 * H);
    std::vector<T> dc_prev(H);
    for (std::size_t j = 0; j < H; ++j) {
      const T i = gates[j], f = gates[H + j], cand = gates[2 * H + j], og = gates[3 * H + j];
      const T dh = g[j];
      const T dc = g[H + j] + dh * og * (T{1} - tanh_c[j] * tanh_c[j]);
      const T d_o = dh * tanh_c[j];
      dz[j] = dc * cand * i * (T{1} - i);
      dz[H + j] = dc * c_prev[j] * f * (T{1} - f);
      dz[2 * H + j] = dc * i * (T{1} - cand * cand);
      dz[3 * H + j] = d_o * og * (T{1} - og);
      dc_prev[j] = dc * f;
    }
    auto& gw = store_.grad(layer.weight);
    auto& gb = store_.grad(layer.bias);
    T* gwp = gw.data().data();
    for (std::size_t r = 0; r < 4 * H; ++r) {
      const T d = dz[r];
      gb[r] += d;
      if (d == T{0}) continue;
      T* row = gwp + r * K;
      for (std::size_t c = 0; c < K; ++c) row[c] += d * joined[c];
    }
    const bool need_x = nodes_[input.index].requires_grad;
    const bool need_h = nodes_[state.h.index].requires_grad;
    if (need_x || need_h) {
      std::vector<T> dj(K, T{0});
      const T* wp = store_.value(layer.weight).data().data();
      for (std::size_t r = 0; r < 4 * H; ++r) {
        const T d = dz[r];
        if (d == T{0}) continue;
        const T* row = wp + r * K;
        for (std::size_t c = 0; c < K; ++c) dj[c] += d * row[c];
      }
      if (need_x) {
        auto& gx = grad_of(input.index);
        for (std::size_t c = 0; c < in; ++c) gx[c] += dj[c];
      }
      if (need_h) {
        auto& gh = grad_of(state.h.index);
        for (std::size_t c = 0; c < H; ++c) gh[c] += dj[in + c];
      }
    }
    if (nodes_[state.c.index].requires_grad) {
      auto& gc = grad_of(state.c.index);
      for (std::size_t j = 0; j < H; ++j) gc[j] += dc_prev[j];
    }
  });
  return {slice(cell, 0, H), slice(cell, H, H)};
}

template <typename T>
Var Tape<T>::conv1d_maxpool(Var seq, const Conv1d& layer) {
  const auto& sn = node(seq);
  const std::size_t len = sn.rows, d = sn.cols;
  if (sn.value.empty() || len == 0) throw PreconditionError("conv1d_maxpool: empty sequence");
  if (d != layer.in) {
    throw DimensionError("conv1d_maxpool '" + store_.entry(layer.weights.front()).name + "': feature width " +
                         dims(d, layer.in));
  }
  const std::size_t F = layer.filters;
  std::vector<T> out(layer.out_dim());
  // argmax position per output; SIZE_MAX marks a clipped (ReLU-zero) output
  std::vector<std::size_t> arg(layer.out_dim(), SIZE_MAX);
  const T* sp = sn.value.data();
  for (std::size_t wi = 0; wi < layer.widths.size(); ++wi) {
    const std::size_t w = layer.widths[wi];
    const auto& W = store_.value(layer.weights[wi]);
    const auto& B = store_.value(layer.biases[wi]);
    const std::size_t positions = std::max(len, w) - w + 1;
    const std::size_t span = w * d;
    for (std::size_t f = 0; f < F; ++f) {
      const T* row = W.data().data() + f * span;
      T best = -std::numeric_limits<T>::infinity();
      std::size_t best_p = 0;
      for (std::size_t p = 0; p < positions; ++p) {
        T acc = B[f];
        const std::size_t avail = std::min(w, len - p);
        for (std::size_t k = 0; k < avail * d; ++k) acc += row[k] * sp[p * d + k];
        if (acc > best) {
          best = acc;
          best_p = p;
        }
      }
      const std::size_t slot = wi * F + f;
      if (best > T{0}) {
        out[slot] = best;
        arg[slot] = best_p;
      } else {
        out[slot] = T{0};
      }
    }
  }
  Var result = push(std::move(out), layer.out_dim(), 1, true);
  on_backward(result, [this, seq, layer, o = result.index, len, d, F, arg = std::move(arg)] {
    const auto& g = nodes_[o].grad;
    const bool need_seq = nodes_[seq.index].requires_grad;
    const auto& sv = nodes_[seq.index].value;
    std::vector<T>* gs = need_seq ? &grad_of(seq.index) : nullptr;
    for (std::size_t wi = 0; wi < layer.widths.size(); ++wi) {
      const std::size_t w = layer.widths[wi];
      const std::size_t span = w * d;
      auto& gW = store_.grad(layer.weights[wi]);
      auto& gB = store_.grad(layer.biases[wi]);
      const auto& W = store_.value(layer.weights[wi]);
      for (std::size_t f = 0; f < F; ++f) {
        const std::size_t slot = wi * F + f;
        if (arg[slot] == SIZE_MAX || g[slot] == T{0}) continue;
        const T gv = g[slot];
        const std::size_t p = arg[slot];
        const std::size_t avail = std::min(w, len - p);
        gB[f] += gv;
        T* grow = gW.data().data() + f * span;
        const T* wrow = W.data().data() + f * span;
        for (std::size_t k = 0; k < avail * d; ++k) {
          grow[k] += gv * sv[p * d + k];
          if (gs) (*gs)[p * d + k] += gv * wrow[k];
        }
      }
    }
  });
  return result;
}

template <typename T>
Var Tape<T>::embed(std::size_t token_id, const Embedding& table) {
  const auto& tv = store_.value(table.table);
  if (token_id >= tv.rows()) {
    throw IndexError("embed '" + store_.entry(table.table).name + "': token id " + std::to_string(token_id) +
                     " outside vocabulary of " + std::to_string(tv.rows()));
  }
  const std::size_t dim = tv.cols();
  const T* row = tv.data().data() + token_id * dim;
  Var out = push(std::vector<T>(row, row + dim), dim, 1, true);
  on_backward(out, [this, table, token_id, dim, o = out.index] {
    const auto& g = nodes_[o].grad;
    T* grow = store_.grad(table.table).data().data() + token_id * dim;
    for (std::size_t j = 0; j < dim; ++j) grow[j] += g[j];
  });
  return out;
}

template <typename T>
Var Tape<T>::softmax_xent(Var logits, std::size_t target) {
  const auto& lv = node(logits).value;
  if (lv.size() < 2) throw PreconditionError("softmax_xent: need at least two classes");
  if (target >= lv.size()) {
    throw IndexError("softmax_xent: target " + std::to_string(target) + " outside " + std::to_string(lv.size()));
  }
  require_finite(lv, "softmax_xent");
  const T mx = *std::max_element(lv.begin(), lv.end());
  std::vector<T> probs(lv.size());
  T z = 0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    probs[i] = std::exp(lv[i] - mx);
    z += probs[i];
  }
  const T loss = std::max(T{0}, std::log(z) + mx - lv[target]);
  for (auto& p : probs) p /= z;
  Var out = push({loss}, 1, 1, needs(logits));
  on_backward(out, [this, logits, target, o = out.index, probs = std::move(probs)] {
    const T g = nodes_[o].grad[0];
    auto& gl = grad_of(logits.index);
    for (std::size_t i = 0; i < probs.size(); ++i) gl[i] += g * probs[i];
    gl[target] -= g;
  });
  return out;
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  if (av.size() != bv.size()) throw DimensionError("add: " + dims(av.size(), bv.size()));
  std::vector<T> y(av);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  Var out = push(std::move(y), node(a).rows, node(a).cols, needs(a) || needs(b));
  on_backward(out, [this, a, b, o = out.index] {
    const auto& g = nodes_[o].grad;
    for (Var v : {a, b}) {
      if (!nodes_[v.index].requires_grad) continue;
      auto& gv = grad_of(v.index);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  if (av.size() != bv.size()) throw DimensionError("sub: " + dims(av.size(), bv.size()));
  std::vector<T> y(av);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  Var out = push(std::move(y), node(a).rows, node(a).cols, needs(a) || needs(b));
  on_backward(out, [this, a, b, o = out.index] {
    const auto& g = nodes_[o].grad;
    if (nodes_[a.index].requires_grad) {
      auto& ga = grad_of(a.index);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (nodes_[b.index].requires_grad) {
      auto& gb = grad_of(b.index);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  if (av.size() != bv.size()) throw DimensionError("mul: " + dims(av.size(), bv.size()));
  std::vector<T> y(av);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  Var out = push(std::move(y), node(a).rows, node(a).cols, needs(a) || needs(b));
  on_backward(out, [this, a, b, o = out.index] {
    const auto& g = nodes_[o].grad;
    if (nodes_[a.index].requires_grad) {
      auto& ga = grad_of(a.index);
      const auto& bv = nodes_[b.index].value;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (nodes_[b.index].requires_grad) {
      auto& gb = grad_of(b.index);
      const auto& av = nodes_[a.index].value;
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::scale(Var a, T s) {
  std::vector<T> y(node(a).value);
  for (auto& v : y) v *= s;
  Var out = push(std::move(y), node(a).rows, node(a).cols, needs(a));
  on_backward(out, [this, a, s, o = out.index] {
    const auto& g = nodes_[o].grad;
    auto& ga = grad_of(a.index);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  });
  return out;
}

template <typename T>
Var Tape<T>::relu(Var a) {
  std::vector<T> y(node(a).value);
  for (auto& v : y) v = v > T{0} ? v : T{0};
  Var out = push(std::move(y), node(a).rows, node(a).cols, needs(a));
  on_backward(out, [this, a, o = out.index] {
    const auto& g = nodes_[o].grad;
    const auto& y = nodes_[o].value;
    auto& ga = grad_of(a.index);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (y[i] > T{0}) ga[i] += g[i];
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::tanh(Var a) {
  std::vector<T> y(node(a).value);
  for (auto& v : y) v = std::tanh(v);
  Var out = push(std::move(y), node(a).rows, node(a).cols, needs(a));
  on_backward(out, [this, a, o = out.index] {
    const auto& g = nodes_[o].grad;
    const auto& y = nodes_[o].value;
    auto& ga = grad_of(a.index);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T{1} - y[i] * y[i]);
  });
  return out;
}

template <typename T>
Var Tape<T>::sigmoid(Var a) {
  std::vector<T> y(node(a).value);
  for (auto& v : y) v = sigmoid_scalar(v);
  Var out = push(std::move(y), node(a).rows, node(a).cols, needs(a));
  on_backward(out, [this, a, o = out.index] {
    const auto& g = nodes_[o].grad;
    const auto& y = nodes_[o].value;
    auto& ga = grad_of(a.index);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T{1} - y[i]);
  });
  return out;
}

template <typename T>
Var Tape<T>::exp(Var a) {
  std::vector<T> y(node(a).value);
  for (auto& v : y) v = std::exp(v);
  Var out = push(std::move(y), node(a).rows, node(a).cols, needs(a));
  on_backward(out, [this, a, o = out.index] {
    const auto& g = nodes_[o].grad;
    const auto& y = nodes_[o].value;
    auto& ga = grad_of(a.index);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
  return out;
}

template <typename T>
Var Tape<T>::clamp(Var a, T lo, T hi) {
  const auto& av = node(a).value;
  std::vector<T> y(av.size());
  std::vector<char> pass(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    y[i] = std::clamp(av[i], lo, hi);
    pass[i] = av[i] >= lo && av[i] <= hi;
  }
  Var out = push(std::move(y), node(a).rows, node(a).cols, needs(a));
  on_backward(out, [this, a, o = out.index, pass = std::move(pass)] {
    const auto& g = nodes_[o].grad;
    auto& ga = grad_of(a.index);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (pass[i]) ga[i] += g[i];
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::sum(Var a) {
  T acc = 0;
  for (T v : node(a).value) acc += v;
  Var out = push({acc}, 1, 1, needs(a));
  on_backward(out, [this, a, o = out.index] {
    const T g = nodes_[o].grad[0];
    for (auto& v : grad_of(a.index)) v += g;
  });
  return out;
}

template <typename T>
Var Tape<T>::add_n(std::span<const Var> xs) {
  if (xs.empty()) throw PreconditionError("add_n: no operands");
  const auto& first = node(xs.front());
  std::vector<T> y(first.value.size(), T{0});
  bool rg = false;
  for (Var v : xs) {
    const auto& vv = node(v).value;
    if (vv.size() != y.size()) throw DimensionError("add_n: " + dims(vv.size(), y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += vv[i];
    rg = rg || needs(v);
  }
  Var out = push(std::move(y), first.rows, first.cols, rg);
  on_backward(out, [this, ins = std::vector<Var>(xs.begin(), xs.end()), o = out.index] {
    const auto& g = nodes_[o].grad;
    for (Var v : ins) {
      if (!nodes_[v.index].requires_grad) continue;
      auto& gv = grad_of(v.index);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::concat(std::span<const Var> xs) {
  if (xs.empty()) throw PreconditionError("concat: no operands");
  std::vector<T> y;
  bool rg = false;
  for (Var v : xs) {
    const auto& vv = node(v).value;
    y.insert(y.end(), vv.begin(), vv.end());
    rg = rg || needs(v);
  }
  const std::size_t n = y.size();
  Var out = push(std::move(y), n, 1, rg);
  on_backward(out, [this, ins = std::vector<Var>(xs.begin(), xs.end()), o = out.index] {
    const auto& g = nodes_[o].grad;
    std::size_t off = 0;
    for (Var v : ins) {
      const std::size_t len = nodes_[v.index].value.size();
      if (nodes_[v.index].requires_grad) {
        auto& gv = grad_of(v.index);
        for (std::size_t i = 0; i < len; ++i) gv[i] += g[off + i];
      }
      off += len;
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::slice(Var a, std::size_t offset, std::size_t length) {
  const auto& av = node(a).value;
  if (length == 0 || offset + length > av.size()) {
    throw DimensionError("slice: [" + std::to_string(offset) + ", +" + std::to_string(length) + ") outside " +
                         std::to_string(av.size()));
  }
  std::vector<T> y(av.begin() + static_cast<std::ptrdiff_t>(offset),
                   av.begin() + static_cast<std::ptrdiff_t>(offset + length));
  Var out = push(std::move(y), length, 1, needs(a));
  on_backward(out, [this, a, offset, o = out.index] {
    const auto& g = nodes_[o].grad;
    auto& ga = grad_of(a.index);
    for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
  });
  return out;
}

template <typename T>
Var Tape<T>::stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw PreconditionError("stack_rows: no rows");
  const std::size_t d = node(rows.front()).value.size();
  std::vector<T> y;
  y.reserve(rows.size() * d);
  bool rg = false;
  for (Var v : rows) {
    const auto& vv = node(v).value;
    if (vv.size() != d) throw DimensionError("stack_rows: row width " + dims(vv.size(), d));
    y.insert(y.end(), vv.begin(), vv.end());
    rg = rg || needs(v);
  }
  Var out = push(std::move(y), rows.size(), d, rg);
  on_backward(out, [this, ins = std::vector<Var>(rows.begin(), rows.end()), d, o = out.index] {
    const auto& g = nodes_[o].grad;
    for (std::size_t r = 0; r < ins.size(); ++r) {
      if (!nodes_[ins[r].index].requires_grad) continue;
      auto& gv = grad_of(ins[r].index);
      for (std::size_t i = 0; i < d; ++i) gv[i] += g[r * d + i];
    }
  });
  return out;
}

// ---------------------------------------------------------------- Gaussian algebra

template <typename T>
Var Tape<T>::reparameterize(Var mean, Var log_var, std::span<const T> noise) {
  const auto& mv = node(mean).value;
  const auto& lv = node(log_var).value;
  if (mv.size() != lv.size() || noise.size() != mv.size()) {
    throw DimensionError("reparameterize: mean/log_var/noise sizes " + std::to_string(mv.size()) + "/" +
                         std::to_string(lv.size()) + "/" + std::to_string(noise.size()));
  }
  std::vector<T> y(mv.size());
  std::vector<T> scaled(mv.size());  // exp(lv/2) * eps
  for (std::size_t i = 0; i < y.size(); ++i) {
    scaled[i] = std::exp(lv[i] / T{2}) * noise[i];
    y[i] = mv[i] + scaled[i];
  }
  Var out = push(std::move(y), mv.size(), 1, needs(mean) || needs(log_var));
  on_backward(out, [this, mean, log_var, o = out.index, scaled = std::move(scaled)] {
    const auto& g = nodes_[o].grad;
    if (nodes_[mean.index].requires_grad) {
      auto& gm = grad_of(mean.index);
      for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
    }
    if (nodes_[log_var.index].requires_grad) {
      auto& gl = grad_of(log_var.index);
      for (std::size_t i = 0; i < g.size(); ++i) gl[i] += g[i] * scaled[i] / T{2};
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::kl_standard(Var mean, Var log_var) {
  const auto& mv = node(mean).value;
  const auto& lv = node(log_var).value;
  if (mv.size() != lv.size()) throw DimensionError("kl_standard: " + dims(mv.size(), lv.size()));
  T kl = 0;
  for (std::size_t i = 0; i < mv.size(); ++i) kl += std::exp(lv[i]) + mv[i] * mv[i] - T{1} - lv[i];
  kl = std::max(T{0}, kl / T{2});
  Var out = push({kl}, 1, 1, needs(mean) || needs(log_var));
  on_backward(out, [this, mean, log_var, o = out.index] {
    const T g = nodes_[o].grad[0];
    const auto& mv = nodes_[mean.index].value;
    const auto& lv = nodes_[log_var.index].value;
    if (nodes_[mean.index].requires_grad) {
      auto& gm = grad_of(mean.index);
      for (std::size_t i = 0; i < mv.size(); ++i) gm[i] += g * mv[i];
    }
    if (nodes_[log_var.index].requires_grad) {
      auto& gl = grad_of(log_var.index);
      for (std::size_t i = 0; i < lv.size(); ++i) gl[i] += g * (std::exp(lv[i]) - T{1}) / T{2};
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::kl_gaussians(Var mean_q, Var log_var_q, Var mean_p, Var log_var_p) {
  const auto& mq = node(mean_q).value;
  const auto& lq = node(log_var_q).value;
  const auto& mp = node(mean_p).value;
  const auto& lp = node(log_var_p).value;
  const std::size_t d = mq.size();
  if (lq.size() != d || mp.size() != d || lp.size() != d) {
    throw DimensionError("kl_gaussians: dimension mismatch between q (" + std::to_string(d) + ") and p (" +
                         std::to_string(mp.size()) + ")");
  }
  T kl = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const T diff = mq[i] - mp[i];
    kl += lp[i] - lq[i] + (std::exp(lq[i]) + diff * diff) * std::exp(-lp[i]) - T{1};
  }
  kl = std::max(T{0}, kl / T{2});
  const bool rg = needs(mean_q) || needs(log_var_q) || needs(mean_p) || needs(log_var_p);
  Var out = push({kl}, 1, 1, rg);
  on_backward(out, [this, mean_q, log_var_q, mean_p, log_var_p, d, o = out.index] {
    const T g = nodes_[o].grad[0];
    const auto& mq = nodes_[mean_q.index].value;
    const auto& lq = nodes_[log_var_q.index].value;
    const auto& mp = nodes_[mean_p.index].value;
    const auto& lp = nodes_[log_var_p.index].value;
    std::vector<T> dm(d), dlq(d), dlp(d);
    for (std::size_t i = 0; i < d; ++i) {
      const T inv = std::exp(-lp[i]);
      const T diff = mq[i] - mp[i];
      dm[i] = g * diff * inv;
      dlq[i] = g * (std::exp(lq[i]) * inv - T{1}) / T{2};
      dlp[i] = g * (T{1} - (std::exp(lq[i]) + diff * diff) * inv) / T{2};
    }
    auto accumulate = [this](Var v, const std::vector<T>& delta, T sign) {
      if (!nodes_[v.index].requires_grad) return;
      auto& gv = grad_of(v.index);
      for (std::size_t i = 0; i < delta.size(); ++i) gv[i] += sign * delta[i];
    };
    accumulate(mean_q, dm, T{1});
    accumulate(mean_p, dm, T{-1});
    accumulate(log_var_q, dlq, T{1});
    accumulate(log_var_p, dlp, T{1});
  });
  return out;
}

// ---------------------------------------------------------------- backward

template <typename T>
void Tape<T>::backward(Var loss) {
  if (!recording_) throw UsageError("Tape::backward: tape is not recording");
  const auto& ln = node(loss);
  if (ln.value.size() != 1) throw UsageError("Tape::backward: loss must be a scalar");
  if (nodes_[loss.index].requires_grad) {
    grad_of(loss.index)[0] = T{1};
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.requires_grad && !n.grad.empty() && n.back) n.back();
    }
  }
  clear();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace mlvae::nd
