#include "vpflow/rng.hpp"

#include <cmath>
#include <sstream>

namespace vpflow {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw DomainError("Rng::below: n must be positive");
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  if (is.fail()) throw DataError("Rng::set_state: malformed engine state");
}

Tensor random_uniform(Shape shape, Rng& rng, double lo, double hi,
                      bool requires_grad) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.values_mut()) v = rng.uniform(lo, hi);
  return t;
}

Tensor standard_normal(Shape shape, Rng& rng, bool requires_grad) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.values_mut()) v = rng.normal();
  return t;
}

}  // namespace vpflow
