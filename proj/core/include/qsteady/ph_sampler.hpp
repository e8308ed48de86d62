#pragma once

#include <cstdint>
#include <stdexcept>

#include "qsteady/dists.hpp"

namespace qsteady {

struct PhSamplerConfig {
    int max_order = 100;
    double scv_min = 0.0025;
    double scv_max = 20.0;
    double rate_min = 1e-2;
    double rate_max = 1e2;
    int max_attempts = 500;
};

// The acceptance window could not be reached within the attempt budget;
// callers should resample with a different seed.
struct PhRejectionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Draws a random unit-mean phase-type distribution. A structure class is
// picked uniformly from {hyper-Erlang mixture, Coxian chain, random
// sub-generator ladder}, the order uniformly from [2, max_order], rates
// log-uniformly from [rate_min, rate_max]; the result is rescaled to mean 1
// and accepted iff its SCV lies in [scv_min, scv_max]. Deterministic in seed.
PhaseType sample_ph(std::uint64_t seed, const PhSamplerConfig& config = {});

}  // namespace qsteady
