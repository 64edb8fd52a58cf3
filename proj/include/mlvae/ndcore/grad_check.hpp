#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mlvae/ndcore/tape.hpp"

namespace mlvae::nd {

struct ParamGradError {
  std::string name;
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  double analytic = 0;  // at worst_index
  double numeric = 0;
  bool flagged = false;
};

struct GradCheckReport {
  std::vector<ParamGradError> params;
  double max_rel_error = 0;
  bool passed = true;
};

using LossBuilder = std::function<Var(Tape<double>&)>;

// Central-difference check of every parameter entry against reverse-mode gradients.
// build_loss must be a pure function of the store; a second evaluation that differs
// from the first raises UsageError.
GradCheckReport grad_check(ParamStore<double>& store, const LossBuilder& build_loss, double epsilon = 1e-5,
                           double tol = 1e-4);

}  // namespace mlvae::nd
