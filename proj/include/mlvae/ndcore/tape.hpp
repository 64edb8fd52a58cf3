#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mlvae/ndcore/layers.hpp"
#include "mlvae/ndcore/param_store.hpp"

namespace mlvae::nd {

// Handle to a value recorded on a Tape. Invalidated when the tape is cleared.
struct Var {
  std::uint32_t index = UINT32_MAX;
  std::uint32_t epoch = 0;
};

struct LstmState {
  Var h, c;
};

// Reverse-mode recorder over vector/matrix valued nodes.
//
// Every operation appends one node holding its forward value and, while
// recording, a closure that pushes the node's gradient to its inputs.
// Parameter-reading operations accumulate straight into the ParamStore's
// gradient buffers, so nothing is copied out of the store on the forward pass.
template <typename T>
class Tape {
 public:
  explicit Tape(ParamStore<T>& store) : store_(store) {}
  // Evaluation-only tape over a read-only store; recording is off and cannot be enabled.
  explicit Tape(const ParamStore<T>& store) : store_(const_cast<ParamStore<T>&>(store)), recording_(false), frozen_(true) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  ParamStore<T>& store() { return store_; }

  // When off, no backward closures are kept and backward() is a usage error.
  void set_recording(bool on) {
    if (on && frozen_) throw UsageError("Tape: cannot record over a read-only parameter store");
    recording_ = on;
  }
  bool recording() const { return recording_; }

  std::size_t size() const { return nodes_.size(); }
  void clear();

  // -- leaves
  // rows == 0 records a vector; otherwise a [rows x size/rows] matrix.
  Var constant(std::span<const T> values, std::size_t rows = 0);
  Var constant(const std::vector<T>& values, std::size_t rows = 0) { return constant(std::span<const T>(values), rows); }
  Var scalar_constant(T v);
  Var param(ParamId id);

  // -- neural operations
  Var linear(Var x, const Linear& layer);
  LstmState lstm_step(Var input, LstmState state, const Lstm& layer);
  Var conv1d_maxpool(Var seq, const Conv1d& layer);
  Var embed(std::size_t token_id, const Embedding& table);
  Var softmax_xent(Var logits, std::size_t target);

  // -- elementwise and structural
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, T s);
  Var relu(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var clamp(Var a, T lo, T hi);
  Var sum(Var a);
  Var add_n(std::span<const Var> xs);
  Var concat(std::span<const Var> xs);
  Var slice(Var a, std::size_t offset, std::size_t length);
  Var stack_rows(std::span<const Var> rows);

  // -- Gaussian algebra on (mean, log-variance) pairs
  Var reparameterize(Var mean, Var log_var, std::span<const T> noise);
  Var kl_standard(Var mean, Var log_var);
  Var kl_gaussians(Var mean_q, Var log_var_q, Var mean_p, Var log_var_p);

  const std::vector<T>& value(Var v) const;
  T scalar(Var v) const;
  std::size_t rows(Var v) const;
  std::size_t cols(Var v) const;
  std::size_t length(Var v) const { return value(v).size(); }

  // Accumulates d(loss)/d(param) into the store and clears the tape.
  void backward(Var loss);

 private:
  struct Node {
    std::size_t rows = 1, cols = 1;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::function<void()> back;
  };

  const Node& node(Var v) const;
  Var push(std::vector<T> value, std::size_t rows, std::size_t cols, bool requires_grad);
  bool needs(Var v) const { return recording_ && nodes_[v.index].requires_grad; }
  std::vector<T>& grad_of(std::uint32_t index);
  void on_backward(Var out, std::function<void()> fn);
  void require_finite(const std::vector<T>& v, const char* op) const;

  ParamStore<T>& store_;
  std::vector<Node> nodes_;
  std::uint32_t epoch_ = 1;
  bool recording_ = true;
  bool frozen_ = false;
};

}  // namespace mlvae::nd
