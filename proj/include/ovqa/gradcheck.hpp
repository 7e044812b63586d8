// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>

#include "ovqa/params.hpp"
#include "ovqa/tape.hpp"

namespace ovqa::diff {

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t scalars_checked = 0;

  std::string summary() const;
};

/// Builds the loss from the store's current values. Must be deterministic:
/// two calls with identical parameters must produce bit-identical losses.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares analytic gradients against central finite differences for every
/// scalar in every parameter. Relative error uses max(|analytic|, |numeric|,
/// 1e-8) as denominator. Throws std::runtime_error if the loss builder is
/// non-deterministic across two evaluations.
GradCheckReport gradcheck(const LossBuilder& build, ParamStore& store, double step,
                          double tolerance);

}  // namespace ovqa::diff
