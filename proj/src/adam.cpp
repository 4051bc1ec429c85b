#include "vpflow/adam.hpp"

#include <cmath>

namespace vpflow {

void AdamState::init(const ParamRegistry& reg) {
  step_count = 0;
  m.clear();
  v.clear();
  for (const auto& [_, t] : reg.items()) {
    m.emplace_back(t.numel(), 0.0);
    v.emplace_back(t.numel(), 0.0);
  }
}

void adam_step(ParamRegistry& params, AdamState& state, double lr) {
  const auto& items = params.items();
  if (state.m.size() != items.size()) {
    throw ContractError("adam_step: state not initialized for this registry");
  }
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step_count));
  for (std::size_t p = 0; p < items.size(); ++p) {
    Tensor t = items[p].second;
    auto vals = t.values_mut();
    auto grads = t.grad();
    auto& mp = state.m[p];
    auto& vp = state.v[p];
    for (std::size_t i = 0; i < vals.size(); ++i) {
      double g = grads[i];
      if (!std::isfinite(g)) {
        throw DivergenceError("adam_step: non-finite gradient in '" +
                              items[p].first + "'");
      }
      mp[i] = state.beta1 * mp[i] + (1.0 - state.beta1) * g;
      vp[i] = state.beta2 * vp[i] + (1.0 - state.beta2) * g * g;
      double m_hat = mp[i] / bc1;
      double v_hat = vp[i] / bc2;
      vals[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

}  // namespace vpflow
