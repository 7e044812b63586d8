// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "ovqa/ndarray.hpp"
#include "ovqa/rng.hpp"

namespace ovqa::diff {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named parameter arrays plus per-parameter Adam moment accumulators and a
/// shared step counter. Iteration order is by name (std::map), which keeps
/// checkpoint layout and gradient-check sweeps deterministic.
class ParamStore {
 public:
  struct Entry {
    NDArray value;
    NDArray m;  // first moment, same shape
    NDArray v;  // second moment, same shape
  };

  /// Registers a parameter; duplicate names are an error.
  void add(const std::string& name, NDArray value);
  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  const NDArray& value(const std::string& name) const;
  NDArray& value_mut(const std::string& name);
  Entry& entry(const std::string& name);

  std::size_t count() const { return entries_.size(); }
  std::size_t scalar_count() const;

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
  std::int64_t step_ = 0;
};

/// Fan-in-scaled uniform init: U(-sqrt(3/fan_in), +sqrt(3/fan_in)), so each
/// weight has variance 1/fan_in. fan_in is the first extent for matrices and
/// the length for vectors.
NDArray init_uniform_fan_in(Rng& rng, std::size_t fan_in, std::span<const std::size_t> shape);

/// Bias-corrected Adam update applied in-place; increments the step counter.
/// Gradients must shape-match their parameters; missing names are skipped
/// (their parameters did not participate in the loss).
void adam_step(ParamStore& store, const std::map<std::string, NDArray>& grads,
               const AdamConfig& cfg);

}  // namespace ovqa::diff
