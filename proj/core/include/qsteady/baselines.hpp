#pragma once

#include <stdexcept>

namespace qsteady {

// Two-moment description of a GI/GI/c queue: arrival rate, per-server
// service rate, server count, and the squared coefficients of variation of
// the inter-arrival and service times.
struct TwoMomentSpec {
    double lambda = 1.0;
    double mu = 1.0;
    int c = 1;
    double ca2 = 1.0;
    double cs2 = 1.0;
};

enum class MeanVariant { ExactMarkovian, AllenCunneen, Klb };

struct UnstableQueueError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Erlang-B blocking probability via the standard recurrence, a = lambda/mu.
double erlang_b(double a, int c);

// Erlang-C waiting probability; requires lambda < c*mu.
double erlang_c(const TwoMomentSpec& spec);

// Mean number in system. ExactMarkovian is the M/M/c value; AllenCunneen
// scales the M/M/c queue length by (ca2+cs2)/2; Klb additionally applies
// the Kraemer/Langenbach-Belz correction factor.
double mean_l(const TwoMomentSpec& spec, MeanVariant variant);

// The queueing term only (excludes the lambda/mu jobs in service).
double mean_lq(const TwoMomentSpec& spec, MeanVariant variant);

}  // namespace qsteady
