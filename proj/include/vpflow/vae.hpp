#pragma once

// Log-densities, the reparameterization trick, and the flow ELBO
//
//   E_q[ log p(x|z_T) ] - beta ( log q(z_0|x) - log p(z_T) - sum_t log_det_t )
//
// estimated with a single noise sample per example.  beta anneals the whole
// KL-minus-log-det block; at beta = 1 and log_det = 0 this is the plain VAE
// bound.  The KL is always the Monte-Carlo estimate at the sampled z_0/z_T;
// the closed-form diagonal KL exists only in the test oracles.

#include <cstddef>

#include "vpflow/nn.hpp"
#include "vpflow/rng.hpp"
#include "vpflow/tensor.hpp"

namespace vpflow {

// z0 = mu + exp(logvar / 2) .* eps
Tensor reparameterize(const Tensor& mu, const Tensor& logvar,
                      const Tensor& eps);

// Row-wise log N(z; 0, I) -> [batch]
Tensor log_normal_std(const Tensor& z);

// Row-wise log N(z; mu, diag(exp(logvar))) -> [batch]
Tensor log_normal_diag(const Tensor& z, const Tensor& mu,
                       const Tensor& logvar);

// Row-wise sum of x log p + (1-x) log(1-p) -> [batch].  x must be exactly
// 0/1; p must already be clamped away from {0, 1}.
Tensor log_bernoulli(const Tensor& x, const Tensor& p);

// Diagonal Gaussian observation density over pixels -> [batch].
Tensor log_gaussian_obs(const Tensor& x, const Tensor& mean,
                        const Tensor& logvar);

// Linear 0 -> 1 over warmup_epochs; 1 when warmup_epochs == 0.  epoch >= 1.
double warmup_beta(std::size_t epoch, std::size_t warmup_epochs);

struct ElboBreakdown {
  double recon_ll = 0;     // mean log p(x|z_T), nats/example
  double kl_mc = 0;        // mean log q(z0|x) - log p(z_T), nats/example
  double log_det_sum = 0;  // mean summed log-det, nats/example
  double beta = 1;
  double elbo = 0;         // mean per-example objective at this beta
  Tensor objective;        // scalar tensor (maximize); backward-ready
  Tensor per_example;      // [batch] objective values
};

ElboBreakdown elbo(const VaeModel& model, const Tensor& x, double beta,
                   Rng& rng);
// Fixed-noise variant for gradient checks and bitwise-reproducible tests.
ElboBreakdown elbo_with_noise(const VaeModel& model, const Tensor& x,
                              double beta, const Tensor& eps);

}  // namespace vpflow
