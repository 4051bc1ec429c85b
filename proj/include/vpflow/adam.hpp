#pragma once

// ADAM with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.

#include <cstdint>
#include <vector>

#include "vpflow/nn.hpp"

namespace vpflow {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> m;  // first moments, registry order
  std::vector<std::vector<double>> v;  // second moments

  void init(const ParamRegistry& reg);
};

// One update from the gradients currently held by the registry's parameters.
// Throws DivergenceError on a non-finite gradient.
void adam_step(ParamRegistry& params, AdamState& state, double lr);

}  // namespace vpflow
