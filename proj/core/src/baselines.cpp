#include "qsteady/baselines.hpp"

#include <cmath>

namespace qsteady {

double erlang_b(double a, int c) {
    if (!(a >= 0.0)) throw std::invalid_argument("erlang_b: offered load must be >= 0");
    if (c < 0) throw std::invalid_argument("erlang_b: c must be >= 0");
    double b = 1.0;
    for (int k = 1; k <= c; ++k) b = a * b / (k + a * b);
    return b;
}

namespace {

void check_stable(const TwoMomentSpec& spec) {
    if (spec.c < 1) throw std::invalid_argument("c must be >= 1");
    if (!(spec.lambda > 0.0) || !(spec.mu > 0.0))
        throw std::invalid_argument("rates must be positive");
    if (!(spec.lambda < spec.c * spec.mu))
        throw UnstableQueueError("unstable: lambda >= c*mu");
}

}  // namespace

double erlang_c(const TwoMomentSpec& spec) {
    check_stable(spec);
    double a = spec.lambda / spec.mu;
    double b = erlang_b(a, spec.c);
    return spec.c * b / (spec.c - a * (1.0 - b));
}

double mean_lq(const TwoMomentSpec& spec, MeanVariant variant) {
    check_stable(spec);
    double a = spec.lambda / spec.mu;
    double rho = a / spec.c;
    double lq_mmc = erlang_c(spec) * rho / (1.0 - rho);
    switch (variant) {
        case MeanVariant::ExactMarkovian:
            return lq_mmc;
        case MeanVariant::AllenCunneen:
            return lq_mmc * 0.5 * (spec.ca2 + spec.cs2);
        case MeanVariant::Klb: {
            double g;
            if (spec.ca2 <= 1.0) {
                double d = 1.0 - spec.ca2;
                g = std::exp(-2.0 * (1.0 - rho) * d * d /
                             (3.0 * rho * (spec.ca2 + spec.cs2)));
            } else {
                g = std::exp(-(1.0 - rho) * (spec.ca2 - 1.0) /
                             (spec.ca2 + 4.0 * spec.cs2));
            }
            return lq_mmc * 0.5 * (spec.ca2 + spec.cs2) * g;
        }
    }
    throw std::logic_error("mean_lq: unknown variant");
}

double mean_l(const TwoMomentSpec& spec, MeanVariant variant) {
    return mean_lq(spec, variant) + spec.lambda / spec.mu;
}

}  // namespace qsteady
