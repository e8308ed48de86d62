#pragma once

#include <cstdint>
#include <random>

namespace qsteady {

// Deterministic variate source. All samplers are implemented here rather
// than with std::*_distribution so that streams do not depend on the
// standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t raw() { return gen_(); }

    // Uniform on [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1); never returns an endpoint, safe under log().
    double uniform_pos() {
        return static_cast<double>((gen_() >> 11) | 1ull) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // Uniform over [0, n).
    std::uint64_t uniform_int(std::uint64_t n);

    // log-uniform over [a, b], a > 0.
    double log_uniform(double a, double b);

    double expo(double rate);
    double normal();
    // Gamma with the given shape and unit scale (Marsaglia–Tsang).
    double gamma(double shape);

private:
    std::mt19937_64 gen_;
};

}  // namespace qsteady
