#include "vpflow/nn.hpp"

#include <cmath>

namespace vpflow {

Tensor glorot_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  if (fan_in == 0 || fan_out == 0) {
    throw ShapeError("glorot_init: fans must be positive");
  }
  double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return random_uniform({fan_in, fan_out}, rng, -a, a, /*requires_grad=*/true);
}

Tensor ParamRegistry::add(const std::string& name, Tensor t) {
  if (!t.requires_grad()) {
    throw ContractError("ParamRegistry: parameter '" + name +
                        "' must require grad");
  }
  for (const auto& [n, _] : items_) {
    if (n == name) {
      throw ContractError("ParamRegistry: duplicate parameter name '" + name +
                          "'");
    }
  }
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamRegistry::find(std::string_view name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw ContractError("ParamRegistry: no parameter named '" +
                      std::string(name) + "'");
}

std::size_t ParamRegistry::total_size() const {
  std::size_t n = 0;
  for (const auto& [_, t] : items_) n += t.numel();
  return n;
}

void ParamRegistry::zero_grad() {
  for (auto& [_, t] : items_) t.zero_grad();
}

GatedDense::GatedDense(std::size_t in, std::size_t out, Rng& rng,
                       ParamRegistry& reg, const std::string& prefix) {
  w_h = reg.add(prefix + ".w_h", glorot_init(in, out, rng));
  b_h = reg.add(prefix + ".b_h", Tensor::zeros({out}, true));
  w_g = reg.add(prefix + ".w_g", glorot_init(in, out, rng));
  b_g = reg.add(prefix + ".b_g", Tensor::zeros({out}, true));
}

Tensor GatedDense::operator()(const Tensor& x) const {
  Tensor lin = add(matmul(x, w_h), b_h);
  Tensor gate = sigmoid(add(matmul(x, w_g), b_g));
  return mul(lin, gate);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, ParamRegistry& reg,
               const std::string& prefix) {
  w = reg.add(prefix + ".w", glorot_init(in, out, rng));
  b = reg.add(prefix + ".b", Tensor::zeros({out}, true));
}

Tensor Linear::operator()(const Tensor& x) const {
  return add(matmul(x, w), b);
}

void ModelConfig::validate() const {
  if (input_dim == 0 || hidden == 0 || latent == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (flow == FlowKind::ccliniaf && flow_k < 1) {
    throw ConfigError("ccliniaf needs K >= 1");
  }
  if ((flow == FlowKind::householder || flow == FlowKind::planar) &&
      flow_t < 1) {
    throw ConfigError(std::string(to_string(flow)) + " needs T >= 1");
  }
}

VaeModel::VaeModel(ModelConfig cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.input_dim, h = cfg_.hidden, m = cfg_.latent;
  enc1_ = GatedDense(d, h, rng, reg_, "enc.gd1");
  enc2_ = GatedDense(h, h, rng, reg_, "enc.gd2");
  mu_head_ = Linear(h, m, rng, reg_, "enc.mu");
  logvar_head_ = Linear(h, m, rng, reg_, "enc.logvar");
  std::size_t pw = flow_param_width(cfg_.flow, m, cfg_.flow_k, cfg_.flow_t);
  if (pw > 0) flow_head_ = Linear(h, pw, rng, reg_, "enc.flow");
  std::size_t gw = gate_head_width(cfg_.flow, cfg_.flow_k);
  if (gw > 0) gate_head_ = Linear(h, gw, rng, reg_, "enc.gate");
  dec1_ = GatedDense(m, h, rng, reg_, "dec.gd1");
  dec2_ = GatedDense(h, h, rng, reg_, "dec.gd2");
  out_head_ = Linear(h, d, rng, reg_, "dec.out");
  if (cfg_.likelihood == Likelihood::gaussian) {
    out_logvar_head_ = Linear(h, d, rng, reg_, "dec.out_logvar");
  }
}

PosteriorParams VaeModel::encode(const Tensor& x) const {
  if (x.rank() != 2 || x.shape()[1] != cfg_.input_dim) {
    throw ShapeError("encode: expected [batch x " +
                     std::to_string(cfg_.input_dim) + "], got " +
                     shape_str(x.shape()));
  }
#ifndef NDEBUG
  for (double v : x.values()) {
    if (v < 0.0 || v > 1.0) throw DomainError("encode: input outside [0,1]");
  }
#endif
  Tensor h = enc2_(enc1_(x));
  PosteriorParams out;
  out.mu = mu_head_(h);
  out.logvar = clamp(logvar_head_(h), -7.0, 7.0);
  if (flow_head_.w.defined()) out.flow_params = flow_head_(h);
  if (gate_head_.w.defined()) out.gate_logits = gate_head_(h);
  return out;
}

VaeModel::Decoded VaeModel::decode(const Tensor& z) const {
  if (z.rank() != 2 || z.shape()[1] != cfg_.latent) {
    throw ShapeError("decode: expected [batch x " +
                     std::to_string(cfg_.latent) + "], got " +
                     shape_str(z.shape()));
  }
  Tensor h = dec2_(dec1_(z));
  Decoded out;
  if (cfg_.likelihood == Likelihood::bernoulli) {
    out.mean = clamp(sigmoid(out_head_(h)), 1e-7, 1.0 - 1e-7);
  } else {
    out.mean = sigmoid(out_head_(h));
    out.logvar = clamp(out_logvar_head_(h), -7.0, 2.0);
  }
  return out;
}

}  // namespace vpflow
