#include "ecalab/rng.hpp"

#include <cmath>
#include <numbers>

namespace ecalab {

double CounterRng::next_normal() noexcept {
    double u1 = next_double();
    const double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace ecalab
