#include "vpflow/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <utility>

namespace vpflow {

namespace {

thread_local Graph g_graph;
thread_local bool g_grad_enabled = true;

void check_finite(const char* op, std::span<const double> v) {
#ifndef NDEBUG
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw DomainError(std::string(op) + ": non-finite value in operand");
    }
  }
#else
  (void)op;
  (void)v;
#endif
}

std::size_t numel_of(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

// -- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  for (std::size_t d : impl->shape) {
    if (d == 0) throw ShapeError("tensor extents must be positive");
  }
  impl->values.assign(numel_of(impl->shape), value);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->grad.assign(impl->values.size(), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (numel_of(shape) != values.size()) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->grad.assign(impl->values.size(), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full(Shape{}, value, requires_grad);
}

std::size_t Tensor::rows() const {
  return rank() == 2 ? impl_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return impl_->shape[1];
  if (rank() == 1) return impl_->shape[0];
  return 1;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() requires a scalar, got shape " +
                     shape_str(shape()));
  }
  return impl_->values[0];
}

void Tensor::zero_grad() {
  if (impl_->requires_grad) {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }
}

Tensor make_op_output(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->values.assign(numel_of(impl->shape), 0.0);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->grad.assign(impl->values.size(), 0.0);
  return Tensor(std::move(impl));
}

// -- Graph ------------------------------------------------------------------

Graph& Graph::active() { return g_graph; }

void Graph::record(std::function<void()> backward_fn) {
  tape_.push_back(std::move(backward_fn));
}

void Graph::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_str(loss.shape()));
  }
  if (tape_.empty()) {
    throw ContractError("backward: graph is empty");
  }
  if (ran_backward_) {
    throw ContractError("backward already ran on this graph; reset() first");
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss does not depend on any parameter");
  }
  loss.impl()->grad[0] += 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
  ran_backward_ = true;
}

void Graph::reset() {
  tape_.clear();
  ran_backward_ = false;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void backward(const Tensor& loss) { Graph::active().backward(loss); }

// -- broadcasting helpers ----------------------------------------------------

namespace {

enum class Pattern { same, scalar_b, scalar_a, row_b, row_a };

bool is_row_over(const Tensor& mat, const Tensor& row) {
  if (mat.rank() != 2) return false;
  std::size_t n = mat.shape()[1];
  if (row.rank() == 1) return row.shape()[0] == n;
  if (row.rank() == 2) return row.shape()[0] == 1 && row.shape()[1] == n;
  return false;
}

Pattern classify(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Pattern::same;
  if (b.numel() == 1) return Pattern::scalar_b;
  if (a.numel() == 1) return Pattern::scalar_a;
  if (is_row_over(a, b)) return Pattern::row_b;
  if (is_row_over(b, a)) return Pattern::row_a;
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

// Iterates the output of a broadcast binary op as (out_idx, a_idx, b_idx).
template <typename F>
void for_broadcast(Pattern p, std::size_t m, std::size_t n, F&& f) {
  switch (p) {
    case Pattern::same:
    case Pattern::scalar_b:
    case Pattern::scalar_a:
      for (std::size_t i = 0; i < m * n; ++i) {
        std::size_t ai = (p == Pattern::scalar_a) ? 0 : i;
        std::size_t bi = (p == Pattern::scalar_b) ? 0 : i;
        f(i, ai, bi);
      }
      break;
    case Pattern::row_b:
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) f(i * n + j, i * n + j, j);
      break;
    case Pattern::row_a:
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) f(i * n + j, j, i * n + j);
      break;
  }
}

// FA/FB compute d(out)/d(a) and d(out)/d(b) from (a, b, out) values.
template <typename FWD, typename FA, typename FB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, FWD fwd,
                 FA dfa, FB dfb) {
  check_finite(name, a.values());
  check_finite(name, b.values());
  Pattern p = classify(a, b, name);
  const Tensor& shaped = (p == Pattern::scalar_a || p == Pattern::row_a) ? b : a;
  std::size_t m = shaped.rank() == 2 ? shaped.shape()[0] : 1;
  std::size_t n = shaped.rank() == 2 ? shaped.shape()[1] : shaped.numel();

  bool needs_grad =
      grad_enabled() && (a.requires_grad() || b.requires_grad());
  Tensor out = make_op_output(shaped.shape(), needs_grad);

  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.values_mut().data();
  for_broadcast(p, m, n, [&](std::size_t oi, std::size_t ai, std::size_t bi) {
    ov[oi] = fwd(av[ai], bv[bi]);
  });

  if (needs_grad) {
    auto ai = a.impl_ptr();
    auto bi = b.impl_ptr();
    auto oi = out.impl_ptr();
    Graph::active().record([=]() {
      const double* g = oi->grad.data();
      const double* avv = ai->values.data();
      const double* bvv = bi->values.data();
      const double* ovv = oi->values.data();
      double* ga = ai->requires_grad ? ai->grad.data() : nullptr;
      double* gb = bi->requires_grad ? bi->grad.data() : nullptr;
      for_broadcast(p, m, n,
                    [&](std::size_t o, std::size_t x, std::size_t y) {
                      if (ga) ga[x] += g[o] * dfa(avv[x], bvv[y], ovv[o]);
                      if (gb) gb[y] += g[o] * dfb(avv[x], bvv[y], ovv[o]);
                    });
    });
  }
  return out;
}

template <typename FWD, typename DF>
Tensor unary_op(const char* name, const Tensor& a, FWD fwd, DF df) {
  check_finite(name, a.values());
  bool needs_grad = grad_enabled() && a.requires_grad();
  Tensor out = make_op_output(a.shape(), needs_grad);
  const double* av = a.values().data();
  double* ov = out.values_mut().data();
  std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(av[i]);

  if (needs_grad) {
    auto ai = a.impl_ptr();
    auto oi = out.impl_ptr();
    Graph::active().record([=]() {
      const double* g = oi->grad.data();
      const double* avv = ai->values.data();
      const double* ovv = oi->values.data();
      double* ga = ai->grad.data();
      for (std::size_t i = 0; i < ai->values.size(); ++i) {
        ga[i] += g[i] * df(avv[i], ovv[i]);
      }
    });
  }
  return out;
}

double sigmoid_guarded(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// -- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor neg(const Tensor& a) {
  return unary_op(
      "neg", a, [](double x) { return -x; },
      [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double x : a.values()) {
    if (!(x > 0.0)) {
      throw DomainError(
          "log: non-positive input; clamp explicitly (clamp_min) first");
    }
  }
  return unary_op(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      "sigmoid", a, sigmoid_guarded,
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      "softplus", a,
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return sigmoid_guarded(x); });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw DomainError("clamp: lo must not exceed hi");
  return unary_op(
      "clamp", a,
      [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary_op(
      "clamp_min", a, [lo](double x) { return std::max(x, lo); },
      [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Tensor add(const Tensor& a, double c) { return add(a, Tensor::scalar(c)); }
Tensor sub(double c, const Tensor& a) { return sub(Tensor::scalar(c), a); }
Tensor mul(const Tensor& a, double c) { return mul(a, Tensor::scalar(c)); }

// -- matmul -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  check_finite("matmul", a.values());
  check_finite("matmul", b.values());
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  bool needs_grad =
      grad_enabled() && (a.requires_grad() || b.requires_grad());
  Tensor out = make_op_output({m, n}, needs_grad);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, (int)m, (int)n,
              (int)k, 1.0, a.values().data(), (int)k, b.values().data(),
              (int)n, 0.0, out.values_mut().data(), (int)n);

  if (needs_grad) {
    auto ai = a.impl_ptr();
    auto bi = b.impl_ptr();
    auto oi = out.impl_ptr();
    Graph::active().record([=]() {
      const double* g = oi->grad.data();
      if (ai->requires_grad) {
        // dA += dC . B^T
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, (int)m, (int)k,
                    (int)n, 1.0, g, (int)n, bi->values.data(), (int)n, 1.0,
                    ai->grad.data(), (int)k);
      }
      if (bi->requires_grad) {
        // dB += A^T . dC
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, (int)k, (int)n,
                    (int)m, 1.0, ai->values.data(), (int)k, g, (int)n, 1.0,
                    bi->grad.data(), (int)n);
      }
    });
  }
  return out;
}

// -- reductions ----------------------------------------------------------------

namespace {

Tensor reduce_all(const Tensor& t, bool mean) {
  check_finite("reduce", t.values());
  bool needs_grad = grad_enabled() && t.requires_grad();
  Tensor out = make_op_output(Shape{}, needs_grad);
  double acc = 0.0;
  for (double x : t.values()) acc += x;
  double scale = mean ? 1.0 / (double)t.numel() : 1.0;
  out.values_mut()[0] = acc * scale;
  if (needs_grad) {
    auto ti = t.impl_ptr();
    auto oi = out.impl_ptr();
    Graph::active().record([=]() {
      double g = oi->grad[0] * scale;
      for (double& gv : ti->grad) gv += g;
    });
  }
  return out;
}

Tensor reduce_axis(const Tensor& t, std::size_t axis, bool mean) {
  if (axis >= t.rank()) {
    throw ShapeError("reduce: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(t.shape()));
  }
  check_finite("reduce", t.values());
  if (t.rank() == 1) return reduce_all(t, mean);

  const std::size_t m = t.shape()[0], n = t.shape()[1];
  const std::size_t out_n = axis == 0 ? n : m;
  const double scale = mean ? 1.0 / (double)(axis == 0 ? m : n) : 1.0;
  bool needs_grad = grad_enabled() && t.requires_grad();
  Tensor out = make_op_output({out_n}, needs_grad);
  const double* tv = t.values().data();
  double* ov = out.values_mut().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      ov[axis == 0 ? j : i] += tv[i * n + j] * scale;
    }
  }
  if (needs_grad) {
    auto ti = t.impl_ptr();
    auto oi = out.impl_ptr();
    Graph::active().record([=]() {
      const double* g = oi->grad.data();
      double* gt = ti->grad.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          gt[i * n + j] += g[axis == 0 ? j : i] * scale;
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor reduce_sum(const Tensor& t) { return reduce_all(t, false); }
Tensor reduce_mean(const Tensor& t) { return reduce_all(t, true); }
Tensor reduce_sum(const Tensor& t, std::size_t axis) {
  return reduce_axis(t, axis, false);
}
Tensor reduce_mean(const Tensor& t, std::size_t axis) {
  return reduce_axis(t, axis, true);
}

// -- softmax --------------------------------------------------------------------

Tensor softmax_stable(const Tensor& logits) {
  if (logits.rank() < 1 || logits.rank() > 2) {
    throw ShapeError("softmax_stable: expects rank 1 or 2, got " +
                     shape_str(logits.shape()));
  }
  for (double x : logits.values()) {
    if (!std::isfinite(x)) {
      throw DomainError("softmax_stable: non-finite logit");
    }
  }
  const std::size_t m = logits.rank() == 2 ? logits.shape()[0] : 1;
  const std::size_t n = logits.rank() == 2 ? logits.shape()[1] : logits.numel();
  bool needs_grad = grad_enabled() && logits.requires_grad();
  Tensor out = make_op_output(logits.shape(), needs_grad);
  const double* lv = logits.values().data();
  double* ov = out.values_mut().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = lv + i * n;
    double* orow = ov + i * n;
    double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    for (std::size_t j = 0; j < n; ++j) orow[j] /= z;
  }
  if (needs_grad) {
    auto li = logits.impl_ptr();
    auto oi = out.impl_ptr();
    Graph::active().record([=]() {
      const double* g = oi->grad.data();
      const double* y = oi->values.data();
      double* gl = li->grad.data();
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
        for (std::size_t j = 0; j < n; ++j) {
          gl[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
        }
      }
    });
  }
  return out;
}

// -- structural ops ----------------------------------------------------------------

Tensor slice_cols(const Tensor& t, std::size_t c0, std::size_t c1) {
  if (t.rank() != 2 || c0 >= c1 || c1 > t.shape()[1]) {
    throw ShapeError("slice_cols: bad column range [" + std::to_string(c0) +
                     "," + std::to_string(c1) + ") for shape " +
                     shape_str(t.shape()));
  }
  const std::size_t m = t.shape()[0], n = t.shape()[1], w = c1 - c0;
  bool needs_grad = grad_enabled() && t.requires_grad();
  Tensor out = make_op_output({m, w}, needs_grad);
  const double* tv = t.values().data();
  double* ov = out.values_mut().data();
  for (std::size_t i = 0; i < m; ++i) {
    std::memcpy(ov + i * w, tv + i * n + c0, w * sizeof(double));
  }
  if (needs_grad) {
    auto ti = t.impl_ptr();
    auto oi = out.impl_ptr();
    Graph::active().record([=]() {
      const double* g = oi->grad.data();
      double* gt = ti->grad.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          gt[i * n + c0 + j] += g[i * w + j];
        }
      }
    });
  }
  return out;
}

Tensor scale_rows(const Tensor& t, const Tensor& s) {
  if (t.rank() != 2) {
    throw ShapeError("scale_rows: expects matrix, got " +
                     shape_str(t.shape()));
  }
  const std::size_t m = t.shape()[0], n = t.shape()[1];
  bool col_vec = s.rank() == 2 && s.shape()[0] == m && s.shape()[1] == 1;
  bool flat = s.rank() == 1 && s.shape()[0] == m;
  if (!col_vec && !flat) {
    throw ShapeError("scale_rows: scales " + shape_str(s.shape()) +
                     " do not match rows of " + shape_str(t.shape()));
  }
  bool needs_grad =
      grad_enabled() && (t.requires_grad() || s.requires_grad());
  Tensor out = make_op_output({m, n}, needs_grad);
  const double* tv = t.values().data();
  const double* sv = s.values().data();
  double* ov = out.values_mut().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) ov[i * n + j] = tv[i * n + j] * sv[i];
  }
  if (needs_grad) {
    auto ti = t.impl_ptr();
    auto si = s.impl_ptr();
    auto oi = out.impl_ptr();
    Graph::active().record([=]() {
      const double* g = oi->grad.data();
      const double* tvv = ti->values.data();
      const double* svv = si->values.data();
      for (std::size_t i = 0; i < m; ++i) {
        if (ti->requires_grad) {
          for (std::size_t j = 0; j < n; ++j) {
            ti->grad[i * n + j] += g[i * n + j] * svv[i];
          }
        }
        if (si->requires_grad) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            acc += g[i * n + j] * tvv[i * n + j];
          }
          si->grad[i] += acc;
        }
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& t, Shape shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  if (n != t.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(t.shape()) + " as " +
                     shape_str(shape));
  }
  bool needs_grad = grad_enabled() && t.requires_grad();
  Tensor out = make_op_output(std::move(shape), needs_grad);
  std::memcpy(out.values_mut().data(), t.values().data(),
              n * sizeof(double));
  if (needs_grad) {
    auto ti = t.impl_ptr();
    auto oi = out.impl_ptr();
    Graph::active().record([=]() {
      for (std::size_t i = 0; i < ti->grad.size(); ++i) {
        ti->grad[i] += oi->grad[i];
      }
    });
  }
  return out;
}

// -- grad_check ------------------------------------------------------------------

double grad_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                  double h) {
  if (!(h > 0.0)) throw DomainError("grad_check: step must be positive");

  auto eval = [&]() {
    NoGradGuard ng;
    return f().item();
  };
  double probe1 = eval();
  double probe2 = eval();
  if (std::memcmp(&probe1, &probe2, sizeof(double)) != 0) {
    throw ContractError(
        "grad_check: two forward passes disagree; f must be deterministic");
  }

  Graph::active().reset();
  for (Tensor& p : params) p.zero_grad();
  Tensor loss = f();
  Graph::active().backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor& p : params) {
    analytic.emplace_back(p.grad().begin(), p.grad().end());
  }
  Graph::active().reset();

  double max_err = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi].values_mut();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      double fp = eval();
      vals[i] = orig - h;
      double fm = eval();
      vals[i] = orig;
      double numeric = (fp - fm) / (2.0 * h);
      double ana = analytic[pi][i];
      double denom = std::max({1.0, std::abs(ana), std::abs(numeric)});
      max_err = std::max(max_err, std::abs(ana - numeric) / denom);
    }
  }
  return max_err;
}

double grad_check(const std::function<Tensor()>& f, const Tensor& theta,
                  double h) {
  Tensor t = theta;
  return grad_check(f, std::span<Tensor>(&t, 1), h);
}

}  // namespace vpflow
