#include "vpflow/vae.hpp"

#include <cmath>

namespace vpflow {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double mean_of(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

}  // namespace

Tensor reparameterize(const Tensor& mu, const Tensor& logvar,
                      const Tensor& eps) {
  if (mu.shape() != logvar.shape() || mu.shape() != eps.shape()) {
    throw ShapeError("reparameterize: mu " + shape_str(mu.shape()) +
                     ", logvar " + shape_str(logvar.shape()) + ", eps " +
                     shape_str(eps.shape()) + " must agree");
  }
  return add(mu, mul(exp(mul(logvar, 0.5)), eps));
}

Tensor log_normal_std(const Tensor& z) {
  return mul(row_sum(add(mul(z, z), kLog2Pi)), -0.5);
}

Tensor log_normal_diag(const Tensor& z, const Tensor& mu,
                       const Tensor& logvar) {
  if (z.shape() != mu.shape() || z.shape() != logvar.shape()) {
    throw ShapeError("log_normal_diag: shapes must agree");
  }
  Tensor d = sub(z, mu);
  Tensor quad = mul(mul(d, d), exp(neg(logvar)));
  return mul(row_sum(add(add(logvar, quad), kLog2Pi)), -0.5);
}

Tensor log_bernoulli(const Tensor& x, const Tensor& p) {
  if (x.shape() != p.shape()) {
    throw ShapeError("log_bernoulli: x " + shape_str(x.shape()) + " vs p " +
                     shape_str(p.shape()));
  }
  for (double v : x.values()) {
    if (v != 0.0 && v != 1.0) {
      throw DataError("log_bernoulli: x must be exactly 0 or 1");
    }
  }
#ifndef NDEBUG
  for (double v : p.values()) {
    if (v < 1e-7 || v > 1.0 - 1e-7) {
      throw DomainError("log_bernoulli: p outside clamp range");
    }
  }
#endif
  Tensor term = add(mul(x, log(p)), mul(sub(1.0, x), log(sub(1.0, p))));
  return row_sum(term);
}

Tensor log_gaussian_obs(const Tensor& x, const Tensor& mean,
                        const Tensor& logvar) {
  return log_normal_diag(x, mean, logvar);
}

double warmup_beta(std::size_t epoch, std::size_t warmup_epochs) {
  if (epoch < 1) throw DomainError("warmup_beta: epoch starts at 1");
  if (warmup_epochs == 0) return 1.0;
  double beta = static_cast<double>(epoch) / static_cast<double>(warmup_epochs);
  return beta < 1.0 ? beta : 1.0;
}

ElboBreakdown elbo_with_noise(const VaeModel& model, const Tensor& x,
                              double beta, const Tensor& eps) {
  if (beta < 0.0 || beta > 1.0) {
    throw DomainError("elbo: beta must lie in [0,1]");
  }
  const ModelConfig& cfg = model.config();
  PosteriorParams post = model.encode(x);
  Tensor z0 = reparameterize(post.mu, post.logvar, eps);
  FlowOutput flow = apply_flow(cfg.flow, cfg.flow_k, cfg.flow_t, z0,
                               post.flow_params, post.gate_logits);
  VaeModel::Decoded dec = model.decode(flow.z);
  Tensor recon = cfg.likelihood == Likelihood::bernoulli
                     ? log_bernoulli(x, dec.mean)
                     : log_gaussian_obs(x, dec.mean, dec.logvar);
  Tensor log_q = log_normal_diag(z0, post.mu, post.logvar);
  Tensor log_p = log_normal_std(flow.z);
  Tensor kl_block = sub(log_q, add(log_p, flow.log_det));
  Tensor per_example = sub(recon, mul(kl_block, beta));

  ElboBreakdown out;
  out.beta = beta;
  out.objective = reduce_mean(per_example);
  out.per_example = per_example;
  out.elbo = out.objective.item();
  out.recon_ll = mean_of(recon.values());
  out.log_det_sum = mean_of(flow.log_det.values());
  out.kl_mc = mean_of(log_q.values()) - mean_of(log_p.values());
  if (!std::isfinite(out.elbo)) {
    throw DivergenceError("elbo: non-finite objective");
  }
  return out;
}

ElboBreakdown elbo(const VaeModel& model, const Tensor& x, double beta,
                   Rng& rng) {
  Tensor eps = standard_normal({x.shape()[0], model.config().latent}, rng);
  return elbo_with_noise(model, x, beta, eps);
}

}  // namespace vpflow
