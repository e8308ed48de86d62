#include "qsteady/ph_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "qsteady/rng.hpp"

namespace qsteady {

namespace {

// Mixture of Erlang branches: alpha puts mass on the head of each chain.
PhaseType make_hyper_erlang(int order, Rng& rng, const PhSamplerConfig& cfg) {
    int max_branches = std::min(4, order);
    int branches = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_branches)));
    std::vector<int> sizes(static_cast<std::size_t>(branches), 1);
    for (int extra = order - branches; extra > 0; --extra)
        sizes[static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(branches)))]++;

    std::vector<double> probs(static_cast<std::size_t>(branches));
    double psum = 0.0;
    for (auto& p : probs) {
        p = rng.uniform_pos();
        psum += p;
    }
    for (auto& p : probs) p /= psum;

    PhaseType ph;
    ph.alpha = Eigen::VectorXd::Zero(order);
    ph.T = Eigen::MatrixXd::Zero(order, order);
    int at = 0;
    for (int b = 0; b < branches; ++b) {
        double rate = rng.log_uniform(cfg.rate_min, cfg.rate_max);
        ph.alpha[at] = probs[static_cast<std::size_t>(b)];
        int k = sizes[static_cast<std::size_t>(b)];
        for (int i = 0; i < k; ++i) {
            ph.T(at + i, at + i) = -rate;
            if (i + 1 < k) ph.T(at + i, at + i + 1) = rate;
        }
        at += k;
    }
    return ph;
}

PhaseType make_coxian(int order, Rng& rng, const PhSamplerConfig& cfg) {
    PhaseType ph;
    ph.alpha = Eigen::VectorXd::Zero(order);
    ph.alpha[0] = 1.0;
    ph.T = Eigen::MatrixXd::Zero(order, order);
    for (int i = 0; i < order; ++i) {
        double rate = rng.log_uniform(cfg.rate_min, cfg.rate_max);
        ph.T(i, i) = -rate;
        if (i + 1 < order) ph.T(i, i + 1) = rng.uniform() * rate;
    }
    return ph;
}

// Forward ladder guarantees absorption is reachable from every phase;
// sparse extra edges and random exit rates give irregular shapes.
PhaseType make_random_ladder(int order, Rng& rng, const PhSamplerConfig& cfg) {
    PhaseType ph;
    ph.alpha.resize(order);
    double asum = 0.0;
    for (int i = 0; i < order; ++i) {
        ph.alpha[i] = rng.uniform_pos();
        asum += ph.alpha[i];
    }
    ph.alpha /= asum;

    ph.T = Eigen::MatrixXd::Zero(order, order);
    std::vector<double> exit(static_cast<std::size_t>(order), 0.0);
    for (int i = 0; i < order; ++i) {
        if (i + 1 < order)
            ph.T(i, i + 1) += rng.log_uniform(cfg.rate_min, cfg.rate_max);
        if (order > 1 && rng.uniform() < 0.5) {
            int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(order - 1)));
            if (j >= i) ++j;
            ph.T(i, j) += rng.log_uniform(cfg.rate_min, cfg.rate_max);
        }
        bool absorb = (i == order - 1) || rng.uniform() < 0.3;
        if (absorb) exit[static_cast<std::size_t>(i)] = rng.log_uniform(cfg.rate_min, cfg.rate_max);
    }
    for (int i = 0; i < order; ++i) {
        double row = 0.0;
        for (int j = 0; j < order; ++j)
            if (j != i) row += ph.T(i, j);
        ph.T(i, i) = -(row + exit[static_cast<std::size_t>(i)]);
    }
    return ph;
}

}  // namespace

PhaseType sample_ph(std::uint64_t seed, const PhSamplerConfig& cfg) {
    if (cfg.max_order < 2)
        throw std::invalid_argument("sample_ph: max_order must be >= 2");
    Rng rng(seed);
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        int order = 2 + static_cast<int>(rng.uniform_int(
                            static_cast<std::uint64_t>(cfg.max_order - 1)));
        int kind = static_cast<int>(rng.uniform_int(3));
        PhaseType ph;
        switch (kind) {
            case 0: ph = make_hyper_erlang(order, rng, cfg); break;
            case 1: ph = make_coxian(order, rng, cfg); break;
            default: ph = make_random_ladder(order, rng, cfg); break;
        }
        MomentVector mom;
        try {
            mom = ph_moments(ph, 2);
        } catch (const std::invalid_argument&) {
            continue;
        }
        double m1 = mom.m[0];
        if (!(m1 > 0.0) || !std::isfinite(m1)) continue;
        // X/m1 has mean 1 and leaves the SCV unchanged.
        ph.T *= m1;
        double c2 = scv(mom);
        if (c2 >= cfg.scv_min && c2 <= cfg.scv_max) {
            ph.validate();
            return ph;
        }
    }
    throw PhRejectionError("sample_ph: attempt budget exhausted; resample with a new seed");
}

}  // namespace qsteady
