#pragma once

// Invertible posterior transformations with exact log-det-Jacobian
// contracts.  The volume-preserving steps (Householder reflections, LinIAF,
// and its convex-combination extension ccLinIAF) report a log-det of
// exactly zero; the planar baseline reports its closed-form log-det.
//
// Strictly-lower entry packing is row-major: row i contributes entries
// (i,0)..(i,i-1), so entry p of a flattened block maps to
// (i, j) with i = floor((1+sqrt(1+8p))/2), j = p - i(i-1)/2.  Checkpoint
// compatibility depends on this order.

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "vpflow/tensor.hpp"

namespace vpflow {

enum class FlowKind { none, planar, householder, liniaf, ccliniaf };
enum class Likelihood { bernoulli, gaussian };

const char* to_string(FlowKind k);
const char* to_string(Likelihood l);
std::optional<FlowKind> parse_flow_kind(std::string_view s);
std::optional<Likelihood> parse_likelihood(std::string_view s);

inline std::size_t tri_entry_count(std::size_t m) { return m * (m - 1) / 2; }

// Width of the encoder's flow-parameter head (0 when kind needs none).
std::size_t flow_param_width(FlowKind kind, std::size_t latent, std::size_t k,
                             std::size_t t);
// Width of the gating head (k for ccliniaf, otherwise 0).
std::size_t gate_head_width(FlowKind kind, std::size_t k);

struct FlowOutput {
  Tensor z;        // [batch x M]
  Tensor log_det;  // [batch], per-example log |det df/dz|
};

// -- differentiable steps -------------------------------------------------

// z1 = (I + strict_lower(entries)) z0 per example.  entries: [batch x M(M-1)/2].
Tensor lower_unit_matvec(const Tensor& entries, const Tensor& z);

FlowOutput liniaf_step(const Tensor& z0, const Tensor& entries);

// entries: [batch x K*M(M-1)/2], gate_logits: [batch x K].
FlowOutput ccliniaf_step(const Tensor& z0, const Tensor& entries,
                         const Tensor& gate_logits);

// z1 = z0 - 2 v (v.z0) / (|v|^2 + 1e-12);  v: [batch x M].
FlowOutput householder_step(const Tensor& z0, const Tensor& v);

// u, w: [batch x M]; b: [batch] or [batch x 1].  u is taken as given; the
// caller must have reparameterized it (planar_reparameterize_u) when
// invertibility has to hold, as apply_flow does for encoder outputs.
FlowOutput planar_step(const Tensor& z0, const Tensor& u, const Tensor& w,
                       const Tensor& b);

// u_hat = u + (softplus(w.u) - 1 - w.u) w / |w|^2, so w.u_hat > -1 and the
// planar map is invertible for any raw u.
Tensor planar_reparameterize_u(const Tensor& u, const Tensor& w);

// Composes the configured steps; flow_params columns hold the per-step
// parameter blocks (see flow_param_width).  gate_logits only for ccliniaf.
FlowOutput apply_flow(FlowKind kind, std::size_t k, std::size_t t,
                      const Tensor& z0, const Tensor& flow_params,
                      const Tensor& gate_logits);

// -- plain-value forms (oracles, inversion, tests) --------------------------

struct LowerUnitTriangular {
  std::size_t dim = 0;
  std::vector<double> m;  // row-major dim x dim

  double at(std::size_t i, std::size_t j) const { return m[i * dim + j]; }
};

LowerUnitTriangular assemble_lower_unit(std::span<const double> entries,
                                        std::size_t dim);

// Sum_k weights[k] * ls[k]; weights must sum to 1 within 1e-9.  The unit
// diagonal is pinned, not summed, so it is exactly 1 bitwise.
LowerUnitTriangular convex_combine(std::span<const LowerUnitTriangular> ls,
                                   std::span<const double> weights);

// Solves L x = rhs by forward substitution.
std::vector<double> forward_substitute(const LowerUnitTriangular& l,
                                       std::span<const double> rhs);

}  // namespace vpflow
