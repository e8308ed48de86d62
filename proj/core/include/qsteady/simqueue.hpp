#pragma once

#include <cstdint>
#include <vector>

#include "qsteady/dists.hpp"

namespace qsteady {

// A complete queue instance: renewal arrivals (mean inter-arrival time 1 by
// convention), one service distribution shared by all c servers, or two
// distributions for the heterogeneous two-server system.
struct QueueSpec {
    Dist arrival;
    std::vector<Dist> services;
    int c = 1;

    void validate() const;
    bool heterogeneous() const { return services.size() == 2; }
};

struct SimConfig {
    std::uint64_t num_arrivals = 1'000'000;
    double warmup_fraction = 0.01;
    std::uint64_t seed = 1;
    int l = 500;
};

// Which server takes an arrival when more than one is idle.
enum class IdleRule { Random, FastestFirst, FixedPriority };

struct SimResult {
    std::vector<double> probs;           // time-weighted P(N = j), j < l
    double tail_mass = 0.0;              // time-weighted P(N >= l)
    std::vector<double> per_server_busy; // busy-time fraction per server
    double mean_L = 0.0;                 // exact time average of N (untruncated)
    double sim_time = 0.0;               // measurement window length
    std::uint64_t seed = 0;
    // Extra observables for cross-checks; not part of the JSON contract.
    double mean_sojourn = 0.0;
    double observed_lambda = 0.0;
    std::uint64_t completions = 0;
};

// FCFS event-driven simulation; statistics are time averages collected after
// the warm-up prefix of arrivals. Deterministic given (spec, cfg).
SimResult simulate(const QueueSpec& spec, const SimConfig& cfg);

// Two heterogeneous servers; `idle_rule` resolves arrivals finding both idle.
SimResult simulate_hetero(const QueueSpec& spec, const SimConfig& cfg,
                          IdleRule idle_rule = IdleRule::Random);

struct CiRecord {
    double mean = 0.0;
    double half_width = 0.0;  // 95% Student-t
    double length = 0.0;
    int reps = 0;
    std::vector<double> rep_means;
};

// 95% CI for mean_L over independent replications (seeds derived from
// cfg.seed). `jobs` <= 0 uses the default worker count.
CiRecord replication_ci(const QueueSpec& spec, const SimConfig& cfg, int reps,
                        int jobs = 0);

// The same CI computation over already-collected replication means.
CiRecord ci_from_samples(const std::vector<double>& samples);

struct MmcExact {
    std::vector<double> probs;
    double tail_mass = 0.0;
    double mean_L = 0.0;
    double p_wait = 0.0;  // Erlang-C
};

// Closed-form M/M/c birth-death solution truncated at l, with the geometric
// tail folded into tail_mass. Requires lambda < c*mu.
MmcExact mmc_exact(double lambda, double mu, int c, int l);

}  // namespace qsteady
