#pragma once

// Seeded RNG with fully specified output sequences.  Raw mt19937_64 draws
// are mapped to doubles by hand (no std::*_distribution) so that the same
// seed yields the same stream on every standard library, and the engine
// state round-trips through checkpoints as text.

#include <cstdint>
#include <random>
#include <string>

#include "vpflow/tensor.hpp"

namespace vpflow {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0,1): 53 random mantissa bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  // Box-Muller without the cached spare, so state is exactly the engine.
  double normal() {
    double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Unbiased draw from [0, n) by rejection.
  std::uint64_t below(std::uint64_t n);

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

Tensor random_uniform(Shape shape, Rng& rng, double lo, double hi,
                      bool requires_grad = false);
Tensor standard_normal(Shape shape, Rng& rng, bool requires_grad = false);

}  // namespace vpflow
