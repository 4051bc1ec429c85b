#include "vpflow/flows.hpp"

#include <cmath>
#include <string>

namespace vpflow {

const char* to_string(FlowKind k) {
  switch (k) {
    case FlowKind::none: return "none";
    case FlowKind::planar: return "planar";
    case FlowKind::householder: return "hf";
    case FlowKind::liniaf: return "liniaf";
    case FlowKind::ccliniaf: return "ccliniaf";
  }
  return "?";
}

const char* to_string(Likelihood l) {
  return l == Likelihood::bernoulli ? "bernoulli" : "gaussian";
}

std::optional<FlowKind> parse_flow_kind(std::string_view s) {
  if (s == "none") return FlowKind::none;
  if (s == "planar") return FlowKind::planar;
  if (s == "hf" || s == "householder") return FlowKind::householder;
  if (s == "liniaf") return FlowKind::liniaf;
  if (s == "ccliniaf") return FlowKind::ccliniaf;
  return std::nullopt;
}

std::optional<Likelihood> parse_likelihood(std::string_view s) {
  if (s == "bernoulli") return Likelihood::bernoulli;
  if (s == "gaussian") return Likelihood::gaussian;
  return std::nullopt;
}

std::size_t flow_param_width(FlowKind kind, std::size_t latent, std::size_t k,
                             std::size_t t) {
  switch (kind) {
    case FlowKind::none: return 0;
    case FlowKind::planar: return t * (2 * latent + 1);
    case FlowKind::householder: return t * latent;
    case FlowKind::liniaf: return tri_entry_count(latent);
    case FlowKind::ccliniaf: return k * tri_entry_count(latent);
  }
  return 0;
}

std::size_t gate_head_width(FlowKind kind, std::size_t k) {
  return kind == FlowKind::ccliniaf ? k : 0;
}

// -- lower_unit_matvec -------------------------------------------------------

namespace {

// Infers M from an entry count W = M(M-1)/2.
std::size_t latent_from_entries(std::size_t w, std::size_t batch_cols) {
  // batch_cols is the z width; trust it and verify.
  if (tri_entry_count(batch_cols) != w) {
    throw ShapeError("strictly-lower entry count " + std::to_string(w) +
                     " does not match latent dimension " +
                     std::to_string(batch_cols));
  }
  return batch_cols;
}

Tensor zeros_like_batch(std::size_t batch) {
  return Tensor::zeros({batch});
}

}  // namespace

Tensor lower_unit_matvec(const Tensor& entries, const Tensor& z) {
  if (entries.rank() != 2 || z.rank() != 2 ||
      entries.shape()[0] != z.shape()[0]) {
    throw ShapeError("lower_unit_matvec: incompatible shapes " +
                     shape_str(entries.shape()) + " and " +
                     shape_str(z.shape()));
  }
  const std::size_t batch = z.shape()[0];
  const std::size_t m = latent_from_entries(entries.shape()[1], z.shape()[1]);
  const std::size_t w = entries.shape()[1];

  bool needs_grad =
      grad_enabled() && (entries.requires_grad() || z.requires_grad());
  Tensor out = make_op_output({batch, m}, needs_grad);

  const double* ev = entries.values().data();
  const double* zv = z.values().data();
  double* ov = out.values_mut().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* e = ev + b * w;
    const double* zb = zv + b * m;
    double* ob = ov + b * m;
    for (std::size_t i = 0; i < m; ++i) {
      double acc = zb[i];  // unit diagonal
      const double* row = e + i * (i - 1) / 2;
      for (std::size_t j = 0; j < i; ++j) acc += row[j] * zb[j];
      ob[i] = acc;
    }
  }

  if (needs_grad) {
    auto ei = entries.impl_ptr();
    auto zi = z.impl_ptr();
    auto oi = out.impl_ptr();
    Graph::active().record([=]() {
      const double* g = oi->grad.data();
      const double* evv = ei->values.data();
      const double* zvv = zi->values.data();
      for (std::size_t b = 0; b < batch; ++b) {
        const double* gb = g + b * m;
        const double* e = evv + b * w;
        const double* zb = zvv + b * m;
        if (zi->requires_grad) {
          double* gz = zi->grad.data() + b * m;
          for (std::size_t i = 0; i < m; ++i) {
            gz[i] += gb[i];
            const double* row = e + i * (i - 1) / 2;
            for (std::size_t j = 0; j < i; ++j) gz[j] += row[j] * gb[i];
          }
        }
        if (ei->requires_grad) {
          double* ge = ei->grad.data() + b * w;
          for (std::size_t i = 0; i < m; ++i) {
            double* grow = ge + i * (i - 1) / 2;
            for (std::size_t j = 0; j < i; ++j) grow[j] += gb[i] * zb[j];
          }
        }
      }
    });
  }
  return out;
}

FlowOutput liniaf_step(const Tensor& z0, const Tensor& entries) {
  Tensor z1 = lower_unit_matvec(entries, z0);
  return {z1, zeros_like_batch(z0.shape()[0])};
}

FlowOutput ccliniaf_step(const Tensor& z0, const Tensor& entries,
                         const Tensor& gate_logits) {
  if (gate_logits.rank() != 2 || gate_logits.shape()[0] != z0.shape()[0]) {
    throw ShapeError("ccliniaf_step: gate logits " +
                     shape_str(gate_logits.shape()) + " do not match batch");
  }
  const std::size_t k = gate_logits.shape()[1];
  const std::size_t w = tri_entry_count(z0.shape()[1]);
  if (entries.rank() != 2 || entries.shape()[1] != k * w) {
    throw ShapeError("ccliniaf_step: entries " + shape_str(entries.shape()) +
                     " do not hold " + std::to_string(k) + " blocks of " +
                     std::to_string(w));
  }
  Tensor y = softmax_stable(gate_logits);
  // Gate weights must stay a convex combination.
  for (std::size_t b = 0; b < y.rows(); ++b) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += y.at(b, j);
    if (std::abs(s - 1.0) > 1e-9) {
      throw DomainError("ccliniaf_step: gate weights sum to " +
                        std::to_string(s));
    }
  }
  Tensor combined;
  for (std::size_t kk = 0; kk < k; ++kk) {
    Tensor block = slice_cols(entries, kk * w, (kk + 1) * w);
    Tensor wk = slice_cols(y, kk, kk + 1);
    Tensor term = scale_rows(block, wk);
    combined = kk == 0 ? term : add(combined, term);
  }
  Tensor z1 = lower_unit_matvec(combined, z0);
  return {z1, zeros_like_batch(z0.shape()[0])};
}

FlowOutput householder_step(const Tensor& z0, const Tensor& v) {
  if (v.rank() != 2 || v.shape() != z0.shape()) {
    throw ShapeError("householder_step: v " + shape_str(v.shape()) +
                     " does not match z " + shape_str(z0.shape()));
  }
  Tensor vz = row_sum(mul(v, z0));                     // [batch]
  Tensor vv = add(row_sum(mul(v, v)), 1e-12);          // zero-vector guard
  Tensor coef = div(mul(vz, 2.0), vv);
  Tensor z1 = sub(z0, scale_rows(v, coef));
  return {z1, zeros_like_batch(z0.shape()[0])};
}

Tensor planar_reparameterize_u(const Tensor& u, const Tensor& w) {
  if (u.shape() != w.shape() || u.rank() != 2) {
    throw ShapeError("planar_reparameterize_u: u " + shape_str(u.shape()) +
                     " vs w " + shape_str(w.shape()));
  }
  Tensor ww = row_sum(mul(w, w));
  for (double x : ww.values()) {
    if (x < 1e-12) {
      throw DomainError(
          "planar_reparameterize_u: degenerate parameters, |w|^2 < 1e-12");
    }
  }
  Tensor wu = row_sum(mul(w, u));
  Tensor coef = div(sub(softplus(wu), add(wu, 1.0)), ww);
  return add(u, scale_rows(w, coef));
}

FlowOutput planar_step(const Tensor& z0, const Tensor& u, const Tensor& w,
                       const Tensor& b) {
  if (u.shape() != z0.shape() || w.shape() != z0.shape()) {
    throw ShapeError("planar_step: u/w must match z " +
                     shape_str(z0.shape()));
  }
  const std::size_t batch = z0.shape()[0];
  Tensor bias = b.rank() == 2 ? reshape(b, {batch}) : b;
  if (bias.shape() != Shape{batch}) {
    throw ShapeError("planar_step: bias " + shape_str(b.shape()) +
                     " does not match batch");
  }
  const std::size_t m = z0.shape()[1];
  for (std::size_t row = 0; row < batch; ++row) {
    double ww = 0.0;
    for (std::size_t j = 0; j < m; ++j) ww += w.at(row, j) * w.at(row, j);
    if (ww < 1e-12) {
      throw DomainError("planar_step: degenerate parameters, |w|^2 < 1e-12");
    }
  }
  Tensor pre = add(row_sum(mul(w, z0)), bias);
  Tensor h = tanh(pre);
  Tensor z1 = add(z0, scale_rows(u, h));
  Tensor uw = row_sum(mul(u, w));
  Tensor psi = sub(1.0, mul(h, h));  // tanh'
  // With a reparameterized u the argument is strictly positive; abs + clamp
  // keep raw u and roundoff in-domain.
  Tensor det = add(mul(uw, psi), 1.0);
  Tensor log_det = log(clamp_min(abs(det), 1e-12));
  return {z1, log_det};
}

FlowOutput apply_flow(FlowKind kind, std::size_t k, std::size_t t,
                      const Tensor& z0, const Tensor& flow_params,
                      const Tensor& gate_logits) {
  const std::size_t batch = z0.shape()[0];
  const std::size_t m = z0.shape()[1];
  if (kind == FlowKind::none) {
    return {z0, zeros_like_batch(batch)};
  }
  const std::size_t want = flow_param_width(kind, m, k, t);
  if (want == 0) {
    // M = 1 triangular flows: the matrix is just the unit diagonal.
    return {z0, zeros_like_batch(batch)};
  }
  if (!flow_params.defined() || flow_params.rank() != 2 ||
      flow_params.shape()[0] != batch || flow_params.shape()[1] != want) {
    throw ShapeError(std::string("apply_flow: ") + to_string(kind) +
                     " expects parameter width " + std::to_string(want));
  }
  switch (kind) {
    case FlowKind::liniaf:
      return liniaf_step(z0, flow_params);
    case FlowKind::ccliniaf:
      return ccliniaf_step(z0, flow_params, gate_logits);
    case FlowKind::householder: {
      if (t < 1) throw ShapeError("apply_flow: hf needs T >= 1");
      Tensor z = z0;
      for (std::size_t s = 0; s < t; ++s) {
        Tensor v = slice_cols(flow_params, s * m, (s + 1) * m);
        z = householder_step(z, v).z;
      }
      return {z, zeros_like_batch(batch)};
    }
    case FlowKind::planar: {
      if (t < 1) throw ShapeError("apply_flow: planar needs T >= 1");
      const std::size_t step_w = 2 * m + 1;
      Tensor z = z0;
      Tensor total;
      for (std::size_t s = 0; s < t; ++s) {
        std::size_t off = s * step_w;
        Tensor u = slice_cols(flow_params, off, off + m);
        Tensor w = slice_cols(flow_params, off + m, off + 2 * m);
        Tensor b = slice_cols(flow_params, off + 2 * m, off + 2 * m + 1);
        FlowOutput step = planar_step(z, planar_reparameterize_u(u, w), w, b);
        z = step.z;
        total = s == 0 ? step.log_det : add(total, step.log_det);
      }
      return {z, total};
    }
    default:
      throw DomainError("apply_flow: unknown flow kind");
  }
}

// -- plain-value forms ------------------------------------------------------

LowerUnitTriangular assemble_lower_unit(std::span<const double> entries,
                                        std::size_t dim) {
  if (entries.size() != tri_entry_count(dim)) {
    throw ShapeError("assemble_lower_unit: got " +
                     std::to_string(entries.size()) + " entries, want " +
                     std::to_string(tri_entry_count(dim)) + " for dim " +
                     std::to_string(dim));
  }
  LowerUnitTriangular l;
  l.dim = dim;
  l.m.assign(dim * dim, 0.0);
  std::size_t p = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < i; ++j) l.m[i * dim + j] = entries[p++];
    l.m[i * dim + i] = 1.0;
  }
  return l;
}

LowerUnitTriangular convex_combine(std::span<const LowerUnitTriangular> ls,
                                   std::span<const double> weights) {
  if (ls.empty() || ls.size() != weights.size()) {
    throw ShapeError("convex_combine: need one weight per matrix");
  }
  double sum = 0.0;
  for (double w : weights) sum += w;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw DomainError("convex_combine: weights sum to " + std::to_string(sum) +
                      ", expected 1");
  }
  const std::size_t dim = ls[0].dim;
  LowerUnitTriangular out;
  out.dim = dim;
  out.m.assign(dim * dim, 0.0);
  for (std::size_t k = 0; k < ls.size(); ++k) {
    if (ls[k].dim != dim) {
      throw ShapeError("convex_combine: dimension mismatch");
    }
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        out.m[i * dim + j] += weights[k] * ls[k].m[i * dim + j];
      }
    }
  }
  for (std::size_t i = 0; i < dim; ++i) out.m[i * dim + i] = 1.0;
  return out;
}

std::vector<double> forward_substitute(const LowerUnitTriangular& l,
                                       std::span<const double> rhs) {
  if (rhs.size() != l.dim) {
    throw ShapeError("forward_substitute: rhs size mismatch");
  }
  std::vector<double> x(l.dim);
  for (std::size_t i = 0; i < l.dim; ++i) {
    double acc = rhs[i];
    for (std::size_t j = 0; j < i; ++j) acc -= l.at(i, j) * x[j];
    x[i] = acc;  // unit diagonal
  }
  return x;
}

}  // namespace vpflow
