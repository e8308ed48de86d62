#include "qsteady/rng.hpp"

#include <cmath>
#include <numbers>

namespace qsteady {

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) return 0;
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
        r = gen_();
    } while (r >= limit);
    return r % n;
}

double Rng::log_uniform(double a, double b) {
    return a * std::exp(uniform() * std::log(b / a));
}

double Rng::expo(double rate) { return -std::log(uniform_pos()) / rate; }

double Rng::normal() {
    // Box–Muller; the sine companion is discarded so one call consumes a
    // fixed number of uniforms.
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gamma(double shape) {
    if (shape < 1.0) {
        double u = uniform_pos();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        double u = uniform_pos();
        double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

}  // namespace qsteady
