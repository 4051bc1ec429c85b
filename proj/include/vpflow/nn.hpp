#pragma once

// Gated dense layers, Glorot initialization, and the encoder/decoder pair:
// two gated hidden layers of 300 units around a 40-dimensional latent code
// by default, with linear heads for the posterior moments and the flow
// parameters.

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vpflow/flows.hpp"
#include "vpflow/rng.hpp"
#include "vpflow/tensor.hpp"

namespace vpflow {

// Uniform Glorot fan-in/fan-out initialization, U[-a, a] with
// a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_init(std::size_t fan_in, std::size_t fan_out, Rng& rng);

class ParamRegistry {
 public:
  Tensor add(const std::string& name, Tensor t);
  const std::vector<std::pair<std::string, Tensor>>& items() const {
    return items_;
  }
  Tensor find(std::string_view name) const;
  std::size_t total_size() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

struct GatedDense {
  Tensor w_h, b_h, w_g, b_g;

  GatedDense() = default;
  GatedDense(std::size_t in, std::size_t out, Rng& rng, ParamRegistry& reg,
             const std::string& prefix);

  // (x W_h + b_h) .* sigmoid(x W_g + b_g)
  Tensor operator()(const Tensor& x) const;
};

struct Linear {
  Tensor w, b;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, ParamRegistry& reg,
         const std::string& prefix);

  Tensor operator()(const Tensor& x) const;
};

struct ModelConfig {
  std::size_t input_dim = 784;
  std::size_t hidden = 300;
  std::size_t latent = 40;
  FlowKind flow = FlowKind::ccliniaf;
  std::size_t flow_k = 5;  // matrices in the convex combination
  std::size_t flow_t = 1;  // steps for householder / planar
  Likelihood likelihood = Likelihood::bernoulli;

  void validate() const;
};

struct PosteriorParams {
  Tensor mu;           // [batch x M]
  Tensor logvar;       // [batch x M], clamped to [-7, 7]
  Tensor flow_params;  // [batch x P] or undefined
  Tensor gate_logits;  // [batch x K] (ccliniaf) or undefined
};

class VaeModel {
 public:
  VaeModel(ModelConfig cfg, Rng& rng);

  PosteriorParams encode(const Tensor& x) const;

  struct Decoded {
    Tensor mean;    // Bernoulli: clamped to [1e-7, 1-1e-7]; Gaussian: (0,1)
    Tensor logvar;  // Gaussian only, clamped to [-7, 2]
  };
  Decoded decode(const Tensor& z) const;

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry& params() { return reg_; }
  const ParamRegistry& params() const { return reg_; }

 private:
  ModelConfig cfg_;
  ParamRegistry reg_;
  GatedDense enc1_, enc2_, dec1_, dec2_;
  Linear mu_head_, logvar_head_, flow_head_, gate_head_;
  Linear out_head_, out_logvar_head_;
};

}  // namespace vpflow
