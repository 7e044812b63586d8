// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ovqa/ndarray.hpp"

namespace ovqa::diff {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid until Tape::reset().
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
};

class ParamStore;

/// Reverse-mode tape. Nodes are appended during the forward pass; every
/// input id is smaller than its consumer's id, so decreasing id order is a
/// reverse topological order. backward() walks the nodes reachable from the
/// root exactly once in that order.
///
/// A tape is confined to one thread. Values are double precision.
class Tape {
 public:
  // --- leaves ---------------------------------------------------------
  Var constant(NDArray v);
  Var constant_scalar(double v) { return constant(NDArray::scalar(v)); }
  Var zeros(std::span<const std::size_t> shape) { return constant(NDArray::zeros(shape)); }
  /// Grad-tracked leaf not tied to a parameter (inputs in tests).
  Var input(NDArray v);
  /// Grad-tracked leaf bound to a named parameter. Repeated calls with the
  /// same name return the same node, so gradients accumulate in one place.
  Var param(ParamStore& store, const std::string& name);

  // --- elementwise ----------------------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var neg(Var a) { return scale(a, -1.0); }
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var elu(Var a);
  Var log_floor(Var a, double floor_value);

  // --- linear algebra -------------------------------------------------
  /// [m x k]·[k x n] -> [m x n], or [m x k]·[k] -> [m].
  Var matmul(Var a, Var b);

  // --- softmax --------------------------------------------------------
  /// Stable softmax along `axis` (max subtraction per slice).
  Var softmax(Var a, int axis);
  /// 1-D softmax where mask[i]==0 entries receive -inf logits: their output
  /// and gradient are exactly zero. An all-masked slice yields all zeros.
  Var masked_softmax(Var a, std::vector<std::uint8_t> mask);

  // --- shape ----------------------------------------------------------
  Var reshape(Var a, std::span<const std::size_t> shape);
  Var concat(std::span<const Var> parts);          // 1-D concat
  Var concat(Var a, Var b);
  Var concat(Var a, Var b, Var c);
  Var hcat(Var a, Var b);                          // [n x p],[n x q] -> [n x (p+q)]
  Var stack_rows(std::span<const Var> rows);       // S vectors [d] -> [S x d]
  Var row(Var m, std::size_t i);                   // [n x d] -> [d]
  Var slice(Var v, std::size_t start, std::size_t len);  // 1-D slice
  Var select_rows(Var m, std::vector<int> ids);    // gather rows (embedding lookup)
  Var pick(Var v, std::size_t index);              // element -> scalar

  // --- broadcasting over rows ------------------------------------------
  Var mul_rowvec(Var m, Var v);   // each row of m ⊙ v
  Var add_rowvec(Var m, Var v);   // each row of m + v

  // --- reductions -------------------------------------------------------
  Var sum(Var a);
  Var mean(Var a);

  // --- composites -------------------------------------------------------
  Var dot(Var a, Var b) { return sum(mul(a, b)); }
  /// y = x W + b for a 1-D x and W of shape [in x out].
  Var affine(Var x, Var W, Var b);
  /// rows(M) W + b, M [n x in], W [in x out], b [out].
  Var affine_rows(Var m, Var W, Var b);

  // --- backward ---------------------------------------------------------
  /// Seeds d(root)/d(root) = 1 and propagates to every reachable node.
  /// root must be a scalar; throws std::invalid_argument otherwise.
  void backward(Var root);

  const NDArray& value(Var v) const { return nodes_[v.id].value; }
  const NDArray& grad(Var v) const { return nodes_[v.id].grad; }

  /// Gradients keyed by parameter name for every param leaf created on this
  /// tape. Parameters never reached by backward report zeros.
  std::map<std::string, NDArray> param_gradients() const;

  std::size_t size() const { return nodes_.size(); }
  void reset();

  /// Test hook: deliberately corrupts the tanh backward rule so gradient
  /// checks have a negative control.
  void set_corrupt_tanh_backward(bool on) { corrupt_tanh_ = on; }

 private:
  using BackwardFn = std::function<void(Tape&, int)>;

  struct Node {
    NDArray value;
    NDArray grad;
    int in0 = -1;
    int in1 = -1;
    std::vector<int> extra;  // inputs beyond the first two
    BackwardFn backward;
  };

  int push(NDArray value, int in0, int in1, BackwardFn fn);
  Var wrap(int id) { return Var{this, id}; }
  NDArray& grad_mut(int id) { return nodes_[id].grad; }
  const NDArray& val(int id) const { return nodes_[id].value; }
  void check_owned(Var v, const char* op) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, int>> param_leaves_;  // (name, node id)
  std::map<std::string, int> param_lookup_;
  bool corrupt_tanh_ = false;

  friend struct TapeOps;
};

/// Standard LSTM cell built from tape primitives. W has shape
/// [(d_in + d_h) x 4*d_h] with gate blocks ordered (input, forget, output,
/// candidate); b has shape [4*d_h].
struct LstmState {
  Var h;
  Var c;
};
LstmState lstm_cell(Tape& tape, Var x, Var h_prev, Var c_prev, Var W, Var b);

}  // namespace ovqa::diff
