#include "ifseg/rng.hpp"

#include <cmath>

namespace ifseg {

double Rng::next_trunc_normal(double sigma) {
    for (;;) {
        double u1 = next_unit();
        double u2 = next_unit();
        if (u1 <= 0.0) continue;
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
        if (std::fabs(z) <= 2.0) return z * sigma;
    }
}

}  // namespace ifseg
