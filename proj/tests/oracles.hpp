// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used as test oracles. Everything
// here is deliberately written with plain loops, separate from the library
// code paths it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ovqa/ndarray.hpp"

namespace oracles {

inline double central_diff(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Plain scalar-loop LSTM step with gate order (input, forget, output,
// candidate); W is [(din + dh) x 4dh] row-major, b is [4dh].
struct RefLstmOut {
  std::vector<double> h;
  std::vector<double> c;
};
inline RefLstmOut reference_lstm_cell(const std::vector<double>& x, const std::vector<double>& h_prev,
                                      const std::vector<double>& c_prev,
                                      const std::vector<double>& W, const std::vector<double>& b,
                                      std::size_t dh) {
  const std::size_t din = x.size();
  const std::size_t in_total = din + h_prev.size();
  std::vector<double> z(b);
  for (std::size_t p = 0; p < in_total; ++p) {
    const double xp = p < din ? x[p] : h_prev[p - din];
    for (std::size_t j = 0; j < 4 * dh; ++j) z[j] += xp * W[p * 4 * dh + j];
  }
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  RefLstmOut out;
  out.h.resize(dh);
  out.c.resize(dh);
  for (std::size_t j = 0; j < dh; ++j) {
    const double gi = sig(z[j]);
    const double gf = sig(z[dh + j]);
    const double go = sig(z[2 * dh + j]);
    const double cand = std::tanh(z[3 * dh + j]);
    out.c[j] = gf * c_prev[j] + gi * cand;
    out.h[j] = go * std::tanh(out.c[j]);
  }
  return out;
}

// Scalar Adam reference for a single parameter, mirrored from the standard
// bias-corrected update.
struct RefAdam {
  double m = 0.0;
  double v = 0.0;
  long t = 0;
  double step(double param, double grad, double lr, double b1, double b2, double eps) {
    ++t;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad * grad;
    const double mhat = m / (1.0 - std::pow(b1, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(b2, static_cast<double>(t)));
    return param - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending
// by absolute value. Used for rank checks on small adjacency matrices.
inline std::vector<double> symmetric_eigenvalues(const ovqa::diff::NDArray& a) {
  const std::size_t n = a.dim(0);
  std::vector<double> m(a.data(), a.data() + n * n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += m[i * n + j] * m[i * n + j];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m[p * n + q];
        if (std::fabs(apq) < 1e-300) continue;
        const double app = m[p * n + p];
        const double aqq = m[q * n + q];
        const double theta = 0.5 * std::atan2(2.0 * apq, aqq - app);
        const double c = std::cos(theta), s = std::sin(theta);
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = m[k * n + p];
          const double akq = m[k * n + q];
          m[k * n + p] = c * akp - s * akq;
          m[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = m[p * n + k];
          const double aqk = m[q * n + k];
          m[p * n + k] = c * apk - s * aqk;
          m[q * n + k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = m[i * n + i];
  std::sort(eig.begin(), eig.end(),
            [](double lhs, double rhs) { return std::fabs(lhs) > std::fabs(rhs); });
  return eig;
}

}  // namespace oracles
