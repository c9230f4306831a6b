#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "evocap/params.hpp"
#include "evocap/tensor.hpp"

// Minimal reverse-mode differentiation over Matrix values. A Tape records
// every op applied during a forward pass; backward() walks it in reverse.
// Parameters are bound lazily from a ParamStore and referenced, not copied.

namespace evocap {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad, const Matrix& out_value)>;

  explicit Tape(const ParamStore* params = nullptr, bool grad_enabled = true);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  const ParamStore* params() const { return params_; }

  Var constant(Matrix m);
  // Leaf that receives a gradient (when gradients are enabled).
  Var input(Matrix m);
  Var param(ParamId id);

  // Records a derived value. `fn` runs during backward only if some parent
  // requires a gradient.
  Var record(Matrix value, std::span<const Var> parents, Backward fn);
  Var record(Matrix value, std::initializer_list<Var> parents, Backward fn) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
  }

  const Matrix& value(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  // Adds `g` into v's gradient; ignored if v does not require one.
  void accumulate(Var v, const Matrix& g);
  // Mutable gradient buffer for v, allocated as zeros on first use.
  Matrix& grad_buffer(Var v);
  const Matrix& grad(Var v) const;

  // Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
  void backward(Var root);
  // Adds the gradient of every bound parameter into `out`.
  void collect_param_grads(Gradients& out) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix owned;
    const Matrix* ref = nullptr;
    Matrix grad;
    bool needs_grad = false;
    Backward backward;
  };

  const ParamStore* params_;
  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::vector<std::int64_t> bound_;  // ParamId -> node id, -1 if unbound
};

inline const Matrix& Var::value() const { return tape->value(*this); }

// Differentiable ops. All shapes are checked and mismatches throw ShapeError.
namespace ad {

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
// a (n x c) + row vector b (1 x c) broadcast over rows.
Var add_row(Var a, Var b);
// Row i of a (n x c) times s(i) where s is n x 1.
Var scale_rows(Var a, Var s);
// Splits each row of x (n x d) into s.cols() contiguous groups and scales
// group g of row i by s(i, g).
Var group_scale(Var x, Var s);
Var transpose(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
// Row-wise softmax. With a mask, entries where mask == 0 get exactly zero
// weight and do not influence the output; every row needs one open entry.
Var softmax_rows(Var a, const Matrix* mask = nullptr);
Var mean_rows(Var a);  // n x c -> 1 x c
Var sum_all(Var a);    // -> 1 x 1
// sum(a .* w) for a fixed weight matrix w; -> 1 x 1.
Var weighted_sum(Var a, const Matrix& w);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t len);
Var gather_rows(Var table, std::span<const std::size_t> ids);
// a (1 x c) repeated n times.
Var repeat_rows(Var a, std::size_t n);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
// out(j, i) = sum_a v(a) * tanh(yw(i, a) + sh(j, a) + b(a)); yw: L x h, sh: N x h.
Var additive_scores(Var yw, Var sh, Var b, Var v);
// -sum_t weights[t] * log(max(p(t, targets[t]), eps)); -> 1 x 1.
Var weighted_nll(Var probs, std::span<const std::size_t> targets, std::span<const double> weights,
                 double eps = 1e-12);

}  // namespace ad
}  // namespace evocap
