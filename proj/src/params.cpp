// SPDX-License-Identifier: Apache-2.0
#include "ovqa/params.hpp"

#include <cmath>
#include <stdexcept>

namespace ovqa::diff {

void ParamStore::add(const std::string& name, NDArray value) {
  NDArray m = NDArray::zeros_like(value);
  NDArray v = NDArray::zeros_like(value);
  auto [it, inserted] = entries_.emplace(name, Entry{std::move(value), std::move(m), std::move(v)});
  if (!inserted) {
    throw std::invalid_argument("ParamStore: duplicate parameter name '" + name + "'");
  }
}

const NDArray& ParamStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
  }
  return it->second.value;
}

NDArray& ParamStore::value_mut(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
  }
  return it->second.value;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
  }
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.numel();
  return n;
}

NDArray init_uniform_fan_in(Rng& rng, std::size_t fan_in,
                            std::span<const std::size_t> shape) {
  NDArray a = NDArray::zeros(shape);
  const double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] = rng.uniform(-limit, limit);
  return a;
}

void adam_step(ParamStore& store, const std::map<std::string, NDArray>& grads,
               const AdamConfig& cfg) {
  store.set_step(store.step() + 1);
  const double t = static_cast<double>(store.step());
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, e] : store.entries()) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const NDArray& g = git->second;
    if (!g.same_shape(e.value)) {
      throw std::invalid_argument("adam_step: gradient shape " + g.shape_str() +
                                  " does not match parameter '" + name + "' " +
                                  e.value.shape_str());
    }
    for (std::size_t i = 0; i < g.numel(); ++i) {
      e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g[i];
      e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = e.m[i] / bc1;
      const double vhat = e.v[i] / bc2;
      e.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace ovqa::diff
