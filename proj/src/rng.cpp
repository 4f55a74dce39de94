#include "meshsdf/rng.hpp"

#include <cmath>

namespace meshsdf {

double Rng::normal() {
  // u1 in (0, 1] so the log stays finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace meshsdf
