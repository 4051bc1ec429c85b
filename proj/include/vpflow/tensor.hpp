#pragma once

// Dense 64-bit tensors (rank 0..2) with a reverse-mode autodiff tape.
//
// Every differentiable primitive records a backward closure on the active
// per-thread Graph while grad mode is on.  backward() replays the tape in
// reverse execution order exactly once; re-running without Graph::reset()
// is an error.  Broadcasting is deliberately narrow: a scalar over any
// tensor, or a row vector over the rows of a matrix.  Anything else must
// be spelled out with an explicit op (scale_rows, slice_cols, ...).

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vpflow/errors.hpp"

namespace vpflow {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // same size as values iff requires_grad
  bool requires_grad = false;
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->values.size(); }

  // Rank-2 helpers; rank-1 tensors count as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  bool requires_grad() const { return impl_->requires_grad; }

  std::span<const double> values() const { return impl_->values; }
  std::span<double> values_mut() { return impl_->values; }
  std::span<const double> grad() const { return impl_->grad; }

  double item() const;                       // scalar extraction
  double at(std::size_t i) const { return impl_->values[i]; }
  double at(std::size_t i, std::size_t j) const {
    return impl_->values[i * cols() + j];
  }

  void zero_grad();

  detail::TensorImpl* impl() const { return impl_.get(); }
  std::shared_ptr<detail::TensorImpl> impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend Tensor make_op_output(Shape, bool);
};

// Output tensor for a primitive op; grad storage is allocated when the op
// participates in differentiation.
Tensor make_op_output(Shape shape, bool requires_grad);

// Ordered record of executed primitives.  One instance per thread; a model
// owns its thread, so distinct models on distinct threads never share state.
class Graph {
 public:
  static Graph& active();

  void record(std::function<void()> backward_fn);
  std::size_t size() const { return tape_.size(); }

  // Seeds d(loss)=1 and replays the tape once, newest entry first.
  void backward(const Tensor& loss);
  void reset();

 private:
  std::vector<std::function<void()>> tape_;
  bool ran_backward_ = false;
};

bool grad_enabled();

// Disables recording and grad propagation for its scope.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// -- elementwise --------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // throws DomainError on non-positive input
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor clamp_min(const Tensor& a, double lo);

Tensor add(const Tensor& a, double c);
Tensor sub(double c, const Tensor& a);
Tensor mul(const Tensor& a, double c);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add(a, -c); }
inline Tensor operator-(double c, const Tensor& a) { return sub(c, a); }
inline Tensor operator*(const Tensor& a, double c) { return mul(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// -- linear algebra and structure ---------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor reduce_sum(const Tensor& t);                    // all elements -> scalar
Tensor reduce_sum(const Tensor& t, std::size_t axis);  // rank-2: 0 or 1
Tensor reduce_mean(const Tensor& t);
Tensor reduce_mean(const Tensor& t, std::size_t axis);

// Max-shifted softmax over the last axis (rank 1, or row-wise for rank 2).
Tensor softmax_stable(const Tensor& logits);

Tensor slice_cols(const Tensor& t, std::size_t c0, std::size_t c1);
Tensor scale_rows(const Tensor& t, const Tensor& s);  // s: [m] or [m,1]
Tensor reshape(const Tensor& t, Shape shape);         // same numel

inline Tensor row_sum(const Tensor& t) { return reduce_sum(t, 1); }

void backward(const Tensor& loss);

// Max over coordinates of |analytic - central difference| /
// max(1, |analytic|, |numeric|).  f must be deterministic (checked by two
// bit-compared forward passes) and must not consume external RNG state.
double grad_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                  double h = 1e-5);
double grad_check(const std::function<Tensor()>& f, const Tensor& theta,
                  double h = 1e-5);

}  // namespace vpflow
