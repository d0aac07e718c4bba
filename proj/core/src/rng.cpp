#include "segsr/rng.hpp"

#include <cmath>
#include <numbers>

#include "segsr/errors.hpp"

namespace segsr {

std::uint64_t Rng::index(std::uint64_t n) {
  if (n == 0) throw ConfigError("Rng::index: empty range");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return v % n;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace segsr
