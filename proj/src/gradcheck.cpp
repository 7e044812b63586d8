// SPDX-License-Identifier: Apache-2.0
#include "ovqa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ovqa::diff {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " max_rel_error=" << max_rel_error << " over "
     << scalars_checked << " scalars";
  if (!worst_param.empty()) {
    os << "; worst " << worst_param << "[" << worst_index << "] analytic=" << worst_analytic
       << " numeric=" << worst_numeric;
  }
  return os.str();
}

namespace {

double eval_loss(const LossBuilder& build, Tape& tape) {
  tape.reset();
  Var loss = build(tape);
  const NDArray& v = tape.value(loss);
  if (v.numel() != 1) {
    throw std::invalid_argument("gradcheck: loss must be scalar, got shape " + v.shape_str());
  }
  return v[0];
}

}  // namespace

GradCheckReport gradcheck(const LossBuilder& build, ParamStore& store, double step,
                          double tolerance) {
  Tape tape;
  const double base1 = eval_loss(build, tape);
  {
    Tape tape2;
    const double base2 = eval_loss(build, tape2);
    if (!(base1 == base2)) {
      std::ostringstream os;
      os << "gradcheck aborted: loss is non-deterministic across two evaluations (" << base1
         << " vs " << base2 << ")";
      throw std::runtime_error(os.str());
    }
  }

  // The tape from the first evaluation provides the analytic gradients.
  tape.reset();
  Var loss = build(tape);
  tape.backward(loss);
  const auto analytic = tape.param_gradients();

  GradCheckReport report;
  Tape scratch;
  for (auto& [name, entry] : store.entries()) {
    const NDArray* ag = nullptr;
    if (auto it = analytic.find(name); it != analytic.end()) ag = &it->second;
    NDArray& value = entry.value;
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double saved = value[i];
      value[i] = saved + step;
      const double plus = eval_loss(build, scratch);
      value[i] = saved - step;
      const double minus = eval_loss(build, scratch);
      value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = ag ? (*ag)[i] : 0.0;
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      ++report.scalars_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace ovqa::diff
