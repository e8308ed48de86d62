#pragma once

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <stdexcept>
#include <variant>
#include <vector>

#include "qsteady/rng.hpp"

namespace qsteady {

// First n raw moments of a nonnegative distribution, m[k] = E[X^(k+1)].
struct MomentVector {
    std::vector<double> m;

    double operator[](std::size_t k) const { return m.at(k); }
    std::size_t size() const { return m.size(); }
};

// (m2 - m1^2) / m1^2.
double scv(const MomentVector& mv);

// Checks positivity, m2 >= m1^2 and log-convexity m[k]^2 <= m[k-1]*m[k+1]
// up to the given relative slack.
bool moments_valid(const MomentVector& mv, double rel_tol = 1e-9);

// Absorption time of a CTMC: initial law `alpha` over p transient phases,
// p x p sub-generator `T`.
struct PhaseType {
    Eigen::VectorXd alpha;
    Eigen::MatrixXd T;

    int order() const { return static_cast<int>(alpha.size()); }
    // Throws std::invalid_argument when the sub-generator or alpha is malformed.
    void validate() const;
};

struct Exponential {
    double rate = 1.0;
};

// Sum of k i.i.d. exponentials with the given per-stage rate; mean k/stage_rate.
struct Erlang {
    int k = 1;
    double stage_rate = 1.0;
};

// Two-branch hyperexponential; branch 2 probability is 1 - p1.
struct HyperExp2 {
    double p1 = 0.5;
    double rate1 = 1.0;
    double rate2 = 1.0;
};

// Parameters of the underlying normal.
struct LogNormal {
    double mu = 0.0;
    double sigma = 1.0;
};

struct Gamma {
    double shape = 1.0;
    double scale = 1.0;
};

using Dist = std::variant<PhaseType, Exponential, Erlang, HyperExp2, LogNormal, Gamma>;

// Analytic raw moments. PhaseType uses m_k = k! * alpha' * (-T)^-k * 1,
// evaluated with repeated linear solves; the parametric families use their
// closed forms. Throws std::invalid_argument for singular -T.
MomentVector moments(const Dist& dist, int n);
MomentVector ph_moments(const PhaseType& ph, int n);

double mean(const Dist& dist);
double scv(const Dist& dist);

// X/rate in law: every k-th moment becomes m_k / rate^k.
Dist scale(const Dist& dist, double rate);

// Balanced-mean two-branch hyperexponential matching (mean, scv) exactly,
// with p1/rate1 == p2/rate2. Requires scv > 1.
HyperExp2 fit_h2_balanced(double mean, double scv);

// Convenience constructors from (mean, scv).
LogNormal lognormal_from_mean_scv(double mean, double scv);
Gamma gamma_from_mean_scv(double mean, double scv);
Erlang erlang_from_mean(int k, double mean);

// Draws variates from one distribution. Construction precomputes the
// per-phase jump tables for PhaseType, so a sampler should be built once
// and reused; draws simulate the absorbing chain.
class DistSampler {
public:
    explicit DistSampler(const Dist& dist);
    double draw(Rng& rng) const;

private:
    struct PhTables {
        std::vector<double> alpha_cdf;
        std::vector<double> exit_rate;
        // Row-major jump CDF: entries (cumulative probability, target phase);
        // target == order means absorption.
        std::vector<std::vector<std::pair<double, int>>> rows;
    };
    Dist dist_;
    PhTables ph_;  // only populated for PhaseType
    double draw_ph(Rng& rng) const;
};

// One-shot convenience wrapper; prefer DistSampler in loops.
double draw(const Dist& dist, Rng& rng);

// Tagged JSON: {"kind": "ph"|"exp"|"erlang"|"h2"|"lognormal"|"gamma", ...}.
// PhaseType stores alpha and T row-major.
nlohmann::json dist_to_json(const Dist& dist);
Dist dist_from_json(const nlohmann::json& j);

}  // namespace qsteady
