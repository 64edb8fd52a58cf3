#include "mlvae/ndcore/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace mlvae::nd {

namespace {

double evaluate(ParamStore<double>& store, const LossBuilder& build_loss) {
  Tape<double> tape(store);
  tape.set_recording(false);
  return tape.scalar(build_loss(tape));
}

}  // namespace

GradCheckReport grad_check(ParamStore<double>& store, const LossBuilder& build_loss, double epsilon, double tol) {
  if (!(epsilon > 0)) throw PreconditionError("grad_check: epsilon must be positive");

  store.zero_grad();
  double base = 0;
  {
    Tape<double> tape(store);
    Var loss = build_loss(tape);
    base = tape.scalar(loss);
    tape.backward(loss);
  }
  if (evaluate(store, build_loss) != base) {
    throw UsageError("grad_check: loss builder is not deterministic (unseeded randomness?)");
  }

  GradCheckReport report;
  for (auto& e : store.entries()) {
    ParamGradError pe;
    pe.name = e.name;
    auto& values = e.value.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double up = evaluate(store, build_loss);
      values[i] = saved - epsilon;
      const double down = evaluate(store, build_loss);
      values[i] = saved;
      const double numeric = (up - down) / (2 * epsilon);
      const double analytic = e.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > pe.max_rel_error || i == 0) {
        pe.max_rel_error = std::max(pe.max_rel_error, rel);
        pe.worst_index = i;
        pe.analytic = analytic;
        pe.numeric = numeric;
      }
    }
    pe.flagged = pe.max_rel_error > tol;
    report.max_rel_error = std::max(report.max_rel_error, pe.max_rel_error);
    report.passed = report.passed && !pe.flagged;
    report.params.push_back(std::move(pe));
  }
  store.zero_grad();
  return report;
}

}  // namespace mlvae::nd
