// SPDX-License-Identifier: Apache-2.0
#include "ovqa/tape.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "ovqa/params.hpp"

namespace ovqa::diff {

namespace {

void axpy(NDArray& dst, const NDArray& src) {
  double* d = dst.data();
  const double* s = src.data();
  const std::size_t n = dst.numel();
  for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

}  // namespace

int Tape::push(NDArray value, int in0, int in1, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  node.grad = NDArray::zeros_like(node.value);
  node.in0 = in0;
  node.in1 = in1;
  node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check_owned(Var v, const char* op) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument(std::string(op) + ": Var does not belong to this tape");
  }
}

void Tape::reset() {
  nodes_.clear();
  param_leaves_.clear();
  param_lookup_.clear();
}

// ---------------------------------------------------------------------------
// leaves

Var Tape::constant(NDArray v) {
  return wrap(push(std::move(v), -1, -1, nullptr));
}

Var Tape::input(NDArray v) {
  return wrap(push(std::move(v), -1, -1, nullptr));
}

Var Tape::param(ParamStore& store, const std::string& name) {
  auto it = param_lookup_.find(name);
  if (it != param_lookup_.end()) return wrap(it->second);
  int id = push(store.value(name), -1, -1, nullptr);
  param_lookup_.emplace(name, id);
  param_leaves_.emplace_back(name, id);
  return wrap(id);
}

// ---------------------------------------------------------------------------
// elementwise

Var Tape::add(Var a, Var b) {
  check_owned(a, "add");
  check_owned(b, "add");
  const NDArray& va = val(a.id);
  const NDArray& vb = val(b.id);
  require_same_shape(va, vb, "add");
  NDArray y = va;
  axpy(y, vb);
  return wrap(push(std::move(y), a.id, b.id, [](Tape& t, int self) {
    const NDArray& g = t.nodes_[self].grad;
    axpy(t.grad_mut(t.nodes_[self].in0), g);
    axpy(t.grad_mut(t.nodes_[self].in1), g);
  }));
}

Var Tape::sub(Var a, Var b) {
  check_owned(a, "sub");
  check_owned(b, "sub");
  const NDArray& va = val(a.id);
  const NDArray& vb = val(b.id);
  require_same_shape(va, vb, "sub");
  NDArray y = va;
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] -= vb[i];
  return wrap(push(std::move(y), a.id, b.id, [](Tape& t, int self) {
    const NDArray& g = t.nodes_[self].grad;
    axpy(t.grad_mut(t.nodes_[self].in0), g);
    NDArray& gb = t.grad_mut(t.nodes_[self].in1);
    for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] -= g[i];
  }));
}

Var Tape::mul(Var a, Var b) {
  check_owned(a, "mul");
  check_owned(b, "mul");
  const NDArray& va = val(a.id);
  const NDArray& vb = val(b.id);
  require_same_shape(va, vb, "mul");
  NDArray y = va;
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= vb[i];
  return wrap(push(std::move(y), a.id, b.id, [](Tape& t, int self) {
    const Node& n = t.nodes_[self];
    const NDArray& g = n.grad;
    const NDArray& va = t.val(n.in0);
    const NDArray& vb = t.val(n.in1);
    NDArray& ga = t.grad_mut(n.in0);
    NDArray& gb = t.grad_mut(n.in1);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga[i] += g[i] * vb[i];
      gb[i] += g[i] * va[i];
    }
  }));
}

Var Tape::scale(Var a, double c) {
  check_owned(a, "scale");
  NDArray y = val(a.id);
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= c;
  return wrap(push(std::move(y), a.id, -1, [c](Tape& t, int self) {
    const Node& n = t.nodes_[self];
    NDArray& ga = t.grad_mut(n.in0);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += c * n.grad[i];
  }));
}

Var Tape::tanh(Var a) {
  check_owned(a, "tanh");
  NDArray y = val(a.id);
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = std::tanh(y[i]);
  return wrap(push(std::move(y), a.id, -1, [](Tape& t, int self) {
    const Node& n = t.nodes_[self];
    NDArray& ga = t.grad_mut(n.in0);
    const double bias = t.corrupt_tanh_ ? 1.05 : 1.0;
    for (std::size_t i = 0; i < ga.numel(); ++i) {
      ga[i] += bias * n.grad[i] * (1.0 - n.value[i] * n.value[i]);
    }
  }));
}

Var Tape::sigmoid(Var a) {
  check_owned(a, "sigmoid");
  NDArray y = val(a.id);
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = 1.0 / (1.0 + std::exp(-y[i]));
  return wrap(push(std::move(y), a.id, -1, [](Tape& t, int self) {
    const Node& n = t.nodes_[self];
    NDArray& ga = t.grad_mut(n.in0);
    for (std::size_t i = 0; i < ga.numel(); ++i) {
      ga[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
    }
  }));
}

Var Tape::elu(Var a) {
  check_owned(a, "elu");
  NDArray y = val(a.id);
  for (std::size_t i = 0; i < y.numel(); ++i) {
    if (y[i] <= 0.0) y[i] = std::exp(y[i]) - 1.0;
  }
  return wrap(push(std::move(y), a.id, -1, [](Tape& t, int self) {
    const Node& n = t.nodes_[self];
    const NDArray& x = t.val(n.in0);
    NDArray& ga = t.grad_mut(n.in0);
    for (std::size_t i = 0; i < ga.numel(); ++i) {
      ga[i] += n.grad[i] * (x[i] > 0.0 ? 1.0 : n.value[i] + 1.0);
    }
  }));
}

Var Tape::log_floor(Var a, double floor_value) {
  check_owned(a, "log_floor");
  NDArray y = val(a.id);
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = std::log(std::max(y[i], floor_value));
  return wrap(push(std::move(y), a.id, -1, [floor_value](Tape& t, int self) {
    const Node& n = t.nodes_[self];
    const NDArray& x = t.val(n.in0);
    NDArray& ga = t.grad_mut(n.in0);
    for (std::size_t i = 0; i < ga.numel(); ++i) {
      if (x[i] > floor_value) ga[i] += n.grad[i] / x[i];
    }
  }));
}

// ---------------------------------------------------------------------------
// linear algebra

Var Tape::matmul(Var a, Var b) {
  check_owned(a, "matmul");
  check_owned(b, "matmul");
  const NDArray& va = val(a.id);
  const NDArray& vb = val(b.id);
  if (va.rank() != 2) {
    throw std::invalid_argument("matmul: lhs must be rank 2, got " + va.shape_str());
  }
  const std::size_t m = va.dim(0), k = va.dim(1);
  if (vb.rank() == 2) {
    if (vb.dim(0) != k) {
      throw std::invalid_argument("matmul: inner extents disagree, " + va.shape_str() +
                                  " vs " + vb.shape_str());
    }
    const std::size_t n = vb.dim(1);
    NDArray y = NDArray::matrix(m, n);
    const double* A = va.data();
    const double* B = vb.data();
    double* Y = y.data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        if (aip == 0.0) continue;
        const double* Brow = B + p * n;
        double* Yrow = Y + i * n;
        for (std::size_t j = 0; j < n; ++j) Yrow[j] += aip * Brow[j];
      }
    }
    return wrap(push(std::move(y), a.id, b.id, [m, k, n](Tape& t, int self) {
      const Node& node = t.nodes_[self];
      const double* G = node.grad.data();
      const double* A = t.val(node.in0).data();
      const double* B = t.val(node.in1).data();
      double* GA = t.grad_mut(node.in0).data();
      double* GB = t.grad_mut(node.in1).data();
      // GA += G B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* Grow = G + i * n;
          const double* Brow = B + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += Grow[j] * Brow[j];
          GA[i * k + p] += acc;
        }
      }
      // GB += A^T G
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t i = 0; i < m; ++i) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          const double* Grow = G + i * n;
          double* GBrow = GB + p * n;
          for (std::size_t j = 0; j < n; ++j) GBrow[j] += aip * Grow[j];
        }
      }
    }));
  }
  if (vb.rank() == 1) {
    if (vb.dim(0) != k) {
      throw std::invalid_argument("matmul: inner extents disagree, " + va.shape_str() +
                                  " vs " + vb.shape_str());
    }
    NDArray y = NDArray::zeros(std::array<std::size_t, 1>{m});
    const double* A = va.data();
    const double* B = vb.data();
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      const double* Arow = A + i * k;
      for (std::size_t p = 0; p < k; ++p) acc += Arow[p] * B[p];
      y[i] = acc;
    }
    return wrap(push(std::move(y), a.id, b.id, [m, k](Tape& t, int self) {
      const Node& node = t.nodes_[self];
      const NDArray& g = node.grad;
      const double* A = t.val(node.in0).data();
      const double* B = t.val(node.in1).data();
      double* GA = t.grad_mut(node.in0).data();
      double* GB = t.grad_mut(node.in1).data();
      for (std::size_t i = 0; i < m; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        const double* Arow = A + i * k;
        double* GArow = GA + i * k;
        for (std::size_t p = 0; p < k; ++p) {
          GArow[p] += gi * B[p];
          GB[p] += gi * Arow[p];
        }
      }
    }));
  }
  throw std::invalid_argument("matmul: rhs must be rank 1 or 2, got " + vb.shape_str());
}

// ---------------------------------------------------------------------------
// softmax

namespace {

// Softmax over a strided slice; masked entries (mask != nullptr, mask[i]==0)
// produce exactly zero output. Returns false when the whole slice is masked.
bool softmax_slice(const double* x, double* y, std::size_t n, std::size_t stride,
                   const std::uint8_t* mask) {
  double mx = -1e300;
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask && !mask[i]) continue;
    any = true;
    mx = std::max(mx, x[i * stride]);
  }
  if (!any) {
    for (std::size_t i = 0; i < n; ++i) y[i * stride] = 0.0;
    return false;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask && !mask[i]) {
      y[i * stride] = 0.0;
    } else {
      const double e = std::exp(x[i * stride] - mx);
      y[i * stride] = e;
      s += e;
    }
  }
  const double inv = 1.0 / s;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask || mask[i]) y[i * stride] *= inv;
  }
  return true;
}

void softmax_slice_backward(const double* y, const double* g, double* gx, std::size_t n,
                            std::size_t stride, const std::uint8_t* mask) {
  double dotgy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask && !mask[i]) continue;
    dotgy += g[i * stride] * y[i * stride];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (mask && !mask[i]) continue;
    gx[i * stride] += y[i * stride] * (g[i * stride] - dotgy);
  }
}

}  // namespace

Var Tape::softmax(Var a, int axis) {
  check_owned(a, "softmax");
  const NDArray& x = val(a.id);
  if (x.rank() == 0) {
    throw std::invalid_argument("softmax: input must have rank >= 1");
  }
  if (axis < 0 || axis >= static_cast<int>(x.rank())) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                " out of range for shape " + x.shape_str());
  }
  NDArray y = NDArray::zeros_like(x);
  if (x.rank() == 1) {
    softmax_slice(x.data(), y.data(), x.numel(), 1, nullptr);
  } else if (axis == 1) {
    for (std::size_t r = 0; r < x.dim(0); ++r) {
      softmax_slice(x.data() + r * x.dim(1), y.data() + r * x.dim(1), x.dim(1), 1, nullptr);
    }
  } else {
    for (std::size_t c = 0; c < x.dim(1); ++c) {
      softmax_slice(x.data() + c, y.data() + c, x.dim(0), x.dim(1), nullptr);
    }
  }
  return wrap(push(std::move(y), a.id, -1, [axis](Tape& t, int self) {
    const Node& n = t.nodes_[self];
    const NDArray& y = n.value;
    const NDArray& g = n.grad;
    NDArray& gx = t.grad_mut(n.in0);
    if (y.rank() == 1) {
      softmax_slice_backward(y.data(), g.data(), gx.data(), y.numel(), 1, nullptr);
    } else if (axis == 1) {
      for (std::size_t r = 0; r < y.dim(0); ++r) {
        const std::size_t off = r * y.dim(1);
        softmax_slice_backward(y.data() + off, g.data() + off, gx.data() + off, y.dim(1), 1,
                               nullptr);
      }
    } else {
      for (std::size_t c = 0; c < y.dim(1); ++c) {
        softmax_slice_backward(y.data() + c, g.data() + c, gx.data() + c, y.dim(0), y.dim(1),
                               nullptr);
      }
    }
  }));
}

Var Tape::masked_softmax(Var a, std::vector<std::uint8_t> mask) {
  check_owned(a, "masked_softmax");
  const NDArray& x = val(a.id);
  if (x.rank() != 1) {
    throw std::invalid_argument("masked_softmax: input must be rank 1, got " + x.shape_str());
  }
  if (mask.size() != x.numel()) {
    throw std::invalid_argument("masked_softmax: mask length " + std::to_string(mask.size()) +
                                " != input length " + std::to_string(x.numel()));
  }
  NDArray y = NDArray::zeros_like(x);
  softmax_slice(x.data(), y.data(), x.numel(), 1, mask.data());
  auto shared = std::make_shared<std::vector<std::uint8_t>>(std::move(mask));
  return wrap(push(std::move(y), a.id, -1, [shared](Tape& t, int self) {
    const Node& n = t.nodes_[self];
    softmax_slice_backward(n.value.data(), n.grad.data(), t.grad_mut(n.in0).data(),
                           n.value.numel(), 1, shared->data());
  }));
}

// ---------------------------------------------------------------------------
// shape ops

Var Tape::reshape(Var a, std::span<const std::size_t> shape) {
  check_owned(a, "reshape");
  const NDArray& x = val(a.id);
  NDArray y = NDArray::zeros(shape);
  if (y.numel() != x.numel()) {
    throw std::invalid_argument("reshape: numel mismatch " + x.shape_str() + " -> " +
                                y.shape_str());
  }
  std::copy(x.data(), x.data() + x.numel(), y.data());
  return wrap(push(std::move(y), a.id, -1, [](Tape& t, int self) {
    const Node& n = t.nodes_[self];
    axpy(t.grad_mut(n.in0), n.grad);  // same element order
  }));
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no parts");
  std::size_t total = 0;
  for (Var p : parts) {
    check_owned(p, "concat");
    if (val(p.id).rank() > 1) {
      throw std::invalid_argument("concat: parts must be rank <= 1");
    }
    total += val(p.id).numel();
  }
  NDArray y = NDArray::zeros(std::array<std::size_t, 1>{total});
  std::vector<int> ids;
  ids.reserve(parts.size());
  std::size_t off = 0;
  for (Var p : parts) {
    const NDArray& v = val(p.id);
    std::copy(v.data(), v.data() + v.numel(), y.data() + off);
    off += v.numel();
    ids.push_back(p.id);
  }
  int in0 = ids.size() > 0 ? ids[0] : -1;
  int in1 = ids.size() > 1 ? ids[1] : -1;
  auto shared = std::make_shared<std::vector<int>>(std::move(ids));
  int id = push(std::move(y), in0, in1, [shared](Tape& t, int self) {
    const NDArray& g = t.nodes_[self].grad;
    std::size_t off = 0;
    for (int pid : *shared) {
      NDArray& gp = t.grad_mut(pid);
      for (std::size_t i = 0; i < gp.numel(); ++i) gp[i] += g[off + i];
      off += gp.numel();
    }
  });
  nodes_[id].extra.assign(shared->begin(), shared->end());
  return wrap(id);
}

Var Tape::concat(Var a, Var b) {
  const Var parts[2] = {a, b};
  return concat(std::span<const Var>(parts, 2));
}

Var Tape::concat(Var a, Var b, Var c) {
  const Var parts[3] = {a, b, c};
  return concat(std::span<const Var>(parts, 3));
}

Var Tape::hcat(Var a, Var b) {
  check_owned(a, "hcat");
  check_owned(b, "hcat");
  const NDArray& va = val(a.id);
  const NDArray& vb = val(b.id);
  if (va.rank() != 2 || vb.rank() != 2 || va.dim(0) != vb.dim(0)) {
    throw std::invalid_argument("hcat: need matching row counts, " + va.shape_str() + " vs " +
                                vb.shape_str());
  }
  const std::size_t n = va.dim(0), p = va.dim(1), q = vb.dim(1);
  NDArray y = NDArray::matrix(n, p + q);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(va.data() + i * p, va.data() + (i + 1) * p, y.data() + i * (p + q));
    std::copy(vb.data() + i * q, vb.data() + (i + 1) * q, y.data() + i * (p + q) + p);
  }
  return wrap(push(std::move(y), a.id, b.id, [n, p, q](Tape& t, int self) {
    const Node& node = t.nodes_[self];
    const NDArray& g = node.grad;
    NDArray& ga = t.grad_mut(node.in0);
    NDArray& gb = t.grad_mut(node.in1);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += g[i * (p + q) + j];
      for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += g[i * (p + q) + p + j];
    }
  }));
}

Var Tape::stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
  const std::size_t d = val(rows[0].id).numel();
  for (Var r : rows) {
    check_owned(r, "stack_rows");
    if (val(r.id).rank() != 1 || val(r.id).numel() != d) {
      throw std::invalid_argument("stack_rows: rows must be rank-1 of equal length");
    }
  }
  NDArray y = NDArray::matrix(rows.size(), d);
  std::vector<int> ids;
  ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const NDArray& v = val(rows[i].id);
    std::copy(v.data(), v.data() + d, y.data() + i * d);
    ids.push_back(rows[i].id);
  }
  int in0 = ids[0];
  int in1 = ids.size() > 1 ? ids[1] : -1;
  auto shared = std::make_shared<std::vector<int>>(std::move(ids));
  int id = push(std::move(y), in0, in1, [shared, d](Tape& t, int self) {
    const NDArray& g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < shared->size(); ++i) {
      NDArray& gr = t.grad_mut((*shared)[i]);
      for (std::size_t j = 0; j < d; ++j) gr[j] += g[i * d + j];
    }
  });
  nodes_[id].extra.assign(shared->begin(), shared->end());
  return wrap(id);
}

Var Tape::row(Var m, std::size_t i) {
  check_owned(m, "row");
  const NDArray& x = val(m.id);
  if (x.rank() != 2 || i >= x.dim(0)) {
    throw std::invalid_argument("row: index " + std::to_string(i) + " invalid for " +
                                x.shape_str());
  }
  const std::size_t d = x.dim(1);
  NDArray y = NDArray::zeros(std::array<std::size_t, 1>{d});
  std::copy(x.data() + i * d, x.data() + (i + 1) * d, y.data());
  return wrap(push(std::move(y), m.id, -1, [i, d](Tape& t, int self) {
    const Node& n = t.nodes_[self];
    NDArray& gm = t.grad_mut(n.in0);
    for (std::size_t j = 0; j < d; ++j) gm[i * d + j] += n.grad[j];
  }));
}

Var Tape::slice(Var v, std::size_t start, std::size_t len) {
  check_owned(v, "slice");
  const NDArray& x = val(v.id);
  if (x.rank() != 1 || start + len > x.numel()) {
    throw std::invalid_argument("slice: [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") invalid for " + x.shape_str());
  }
  NDArray y = NDArray::zeros(std::array<std::size_t, 1>{len});
  std::copy(x.data() + start, x.data() + start + len, y.data());
  return wrap(push(std::move(y), v.id, -1, [start, len](Tape& t, int self) {
    const Node& n = t.nodes_[self];
    NDArray& gv = t.grad_mut(n.in0);
    for (std::size_t j = 0; j < len; ++j) gv[start + j] += n.grad[j];
  }));
}

Var Tape::select_rows(Var m, std::vector<int> ids) {
  check_owned(m, "select_rows");
  const NDArray& x = val(m.id);
  if (x.rank() != 2) throw std::invalid_argument("select_rows: need rank 2, got " + x.shape_str());
  const std::size_t d = x.dim(1);
  for (int r : ids) {
    if (r < 0 || static_cast<std::size_t>(r) >= x.dim(0)) {
      throw std::invalid_argument("select_rows: row " + std::to_string(r) + " out of range for " +
                                  x.shape_str());
    }
  }
  NDArray y = NDArray::matrix(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy(x.data() + ids[i] * d, x.data() + ids[i] * d + d, y.data() + i * d);
  }
  auto shared = std::make_shared<std::vector<int>>(std::move(ids));
  return wrap(push(std::move(y), m.id, -1, [shared, d](Tape& t, int self) {
    const Node& n = t.nodes_[self];
    NDArray& gm = t.grad_mut(n.in0);
    for (std::size_t i = 0; i < shared->size(); ++i) {
      const std::size_t r = static_cast<std::size_t>((*shared)[i]);
      for (std::size_t j = 0; j < d; ++j) gm[r * d + j] += n.grad[i * d + j];
    }
  }));
}

Var Tape::pick(Var v, std::size_t index) {
  check_owned(v, "pick");
  const NDArray& x = val(v.id);
  if (index >= x.numel()) {
    throw std::invalid_argument("pick: index " + std::to_string(index) + " out of range for " +
                                x.shape_str());
  }
  NDArray y = NDArray::scalar(x[index]);
  return wrap(push(std::move(y), v.id, -1, [index](Tape& t, int self) {
    const Node& n = t.nodes_[self];
    t.grad_mut(n.in0)[index] += n.grad[0];
  }));
}

// ---------------------------------------------------------------------------
// row broadcasting

Var Tape::mul_rowvec(Var m, Var v) {
  check_owned(m, "mul_rowvec");
  check_owned(v, "mul_rowvec");
  const NDArray& x = val(m.id);
  const NDArray& w = val(v.id);
  if (x.rank() != 2 || w.rank() != 1 || x.dim(1) != w.numel()) {
    throw std::invalid_argument("mul_rowvec: shapes " + x.shape_str() + " vs " + w.shape_str());
  }
  const std::size_t n = x.dim(0), d = x.dim(1);
  NDArray y = x;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] *= w[j];
  }
  return wrap(push(std::move(y), m.id, v.id, [n, d](Tape& t, int self) {
    const Node& node = t.nodes_[self];
    const NDArray& g = node.grad;
    const NDArray& x = t.val(node.in0);
    const NDArray& w = t.val(node.in1);
    NDArray& gm = t.grad_mut(node.in0);
    NDArray& gv = t.grad_mut(node.in1);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        gm[i * d + j] += g[i * d + j] * w[j];
        gv[j] += g[i * d + j] * x[i * d + j];
      }
    }
  }));
}

Var Tape::add_rowvec(Var m, Var v) {
  check_owned(m, "add_rowvec");
  check_owned(v, "add_rowvec");
  const NDArray& x = val(m.id);
  const NDArray& w = val(v.id);
  if (x.rank() != 2 || w.rank() != 1 || x.dim(1) != w.numel()) {
    throw std::invalid_argument("add_rowvec: shapes " + x.shape_str() + " vs " + w.shape_str());
  }
  const std::size_t n = x.dim(0), d = x.dim(1);
  NDArray y = x;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] += w[j];
  }
  return wrap(push(std::move(y), m.id, v.id, [n, d](Tape& t, int self) {
    const Node& node = t.nodes_[self];
    const NDArray& g = node.grad;
    NDArray& gm = t.grad_mut(node.in0);
    NDArray& gv = t.grad_mut(node.in1);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        gm[i * d + j] += g[i * d + j];
        gv[j] += g[i * d + j];
      }
    }
  }));
}

// ---------------------------------------------------------------------------
// reductions

Var Tape::sum(Var a) {
  check_owned(a, "sum");
  const NDArray& x = val(a.id);
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += x[i];
  return wrap(push(NDArray::scalar(s), a.id, -1, [](Tape& t, int self) {
    const Node& n = t.nodes_[self];
    NDArray& ga = t.grad_mut(n.in0);
    const double g = n.grad[0];
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  }));
}

Var Tape::mean(Var a) {
  check_owned(a, "mean");
  const NDArray& x = val(a.id);
  if (x.numel() == 0) throw std::invalid_argument("mean: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += x[i];
  const double inv = 1.0 / static_cast<double>(x.numel());
  return wrap(push(NDArray::scalar(s * inv), a.id, -1, [inv](Tape& t, int self) {
    const Node& n = t.nodes_[self];
    NDArray& ga = t.grad_mut(n.in0);
    const double g = n.grad[0] * inv;
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  }));
}

// ---------------------------------------------------------------------------
// fused affine

Var Tape::affine(Var x, Var W, Var b) {
  check_owned(x, "affine");
  check_owned(W, "affine");
  check_owned(b, "affine");
  const NDArray& vx = val(x.id);
  const NDArray& vw = val(W.id);
  const NDArray& vb = val(b.id);
  if (vx.rank() != 1 || vw.rank() != 2 || vb.rank() != 1 || vw.dim(0) != vx.numel() ||
      vw.dim(1) != vb.numel()) {
    throw std::invalid_argument("affine: shapes " + vx.shape_str() + ", " + vw.shape_str() +
                                ", " + vb.shape_str());
  }
  const std::size_t in = vw.dim(0), out = vw.dim(1);
  NDArray y = vb;
  for (std::size_t p = 0; p < in; ++p) {
    const double xp = vx[p];
    if (xp == 0.0) continue;
    const double* Wrow = vw.data() + p * out;
    for (std::size_t j = 0; j < out; ++j) y[j] += xp * Wrow[j];
  }
  int id = push(std::move(y), x.id, W.id, [in, out](Tape& t, int self) {
    const Node& node = t.nodes_[self];
    const NDArray& g = node.grad;
    const NDArray& vx = t.val(node.in0);
    const NDArray& vw = t.val(node.in1);
    const int bid = node.extra[0];
    NDArray& gx = t.grad_mut(node.in0);
    NDArray& gw = t.grad_mut(node.in1);
    NDArray& gb = t.grad_mut(bid);
    for (std::size_t j = 0; j < out; ++j) gb[j] += g[j];
    for (std::size_t p = 0; p < in; ++p) {
      const double* Wrow = vw.data() + p * out;
      double* GWrow = gw.data() + p * out;
      double acc = 0.0;
      const double xp = vx[p];
      for (std::size_t j = 0; j < out; ++j) {
        acc += g[j] * Wrow[j];
        GWrow[j] += xp * g[j];
      }
      gx[p] += acc;
    }
  });
  nodes_[id].extra.push_back(b.id);
  return wrap(id);
}

Var Tape::affine_rows(Var m, Var W, Var b) {
  Var y = matmul(m, W);
  return add_rowvec(y, b);
}

// ---------------------------------------------------------------------------
// backward

void Tape::backward(Var root) {
  check_owned(root, "backward");
  if (val(root.id).numel() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got shape " +
                                val(root.id).shape_str());
  }
  // Mark the set reachable from root along input edges.
  std::vector<std::uint8_t> reachable(nodes_.size(), 0);
  std::vector<int> stack = {root.id};
  reachable[root.id] = 1;
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const Node& n = nodes_[id];
    auto visit = [&](int in) {
      if (in >= 0 && !reachable[in]) {
        reachable[in] = 1;
        stack.push_back(in);
      }
    };
    visit(n.in0);
    visit(n.in1);
    for (int e : n.extra) visit(e);
  }
  nodes_[root.id].grad[0] = 1.0;
  // Inputs always precede outputs, so decreasing id is reverse topological
  // order; each reachable node is processed exactly once.
  for (int id = root.id; id >= 0; --id) {
    if (!reachable[id]) continue;
    const Node& n = nodes_[id];
    if (n.backward) n.backward(*this, id);
  }
}

std::map<std::string, NDArray> Tape::param_gradients() const {
  std::map<std::string, NDArray> out;
  for (const auto& [name, id] : param_leaves_) {
    out.emplace(name, nodes_[id].grad);
  }
  return out;
}

// ---------------------------------------------------------------------------

LstmState lstm_cell(Tape& tape, Var x, Var h_prev, Var c_prev, Var W, Var b) {
  const std::size_t dh = tape.value(h_prev).numel();
  Var xh = tape.concat(x, h_prev);
  Var z = tape.affine(xh, W, b);
  Var gate_i = tape.sigmoid(tape.slice(z, 0, dh));
  Var gate_f = tape.sigmoid(tape.slice(z, dh, dh));
  Var gate_o = tape.sigmoid(tape.slice(z, 2 * dh, dh));
  Var cand = tape.tanh(tape.slice(z, 3 * dh, dh));
  Var c = tape.add(tape.mul(gate_f, c_prev), tape.mul(gate_i, cand));
  Var h = tape.mul(gate_o, tape.tanh(c));
  return {h, c};
}

}  // namespace ovqa::diff
