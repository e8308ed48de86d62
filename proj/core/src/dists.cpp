#include "qsteady/dists.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace qsteady {

double scv(const MomentVector& mv) {
    if (mv.size() < 2) throw std::invalid_argument("scv: need at least two moments");
    double m1 = mv.m[0], m2 = mv.m[1];
    return (m2 - m1 * m1) / (m1 * m1);
}

bool moments_valid(const MomentVector& mv, double rel_tol) {
    for (double v : mv.m)
        if (!(v > 0.0) || !std::isfinite(v)) return false;
    if (mv.size() >= 2 && mv.m[1] < mv.m[0] * mv.m[0] * (1.0 - rel_tol)) return false;
    for (std::size_t k = 1; k + 1 < mv.size(); ++k) {
        if (mv.m[k] * mv.m[k] > mv.m[k - 1] * mv.m[k + 1] * (1.0 + rel_tol)) return false;
    }
    return true;
}

void PhaseType::validate() const {
    const auto p = alpha.size();
    if (p == 0 || T.rows() != p || T.cols() != p)
        throw std::invalid_argument("PhaseType: dimension mismatch");
    double asum = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) {
        if (alpha[i] < 0.0) throw std::invalid_argument("PhaseType: negative alpha entry");
        asum += alpha[i];
    }
    if (std::abs(asum - 1.0) > 1e-9)
        throw std::invalid_argument("PhaseType: alpha does not sum to 1");
    bool any_exit = false;
    for (Eigen::Index i = 0; i < p; ++i) {
        if (!(T(i, i) < 0.0)) throw std::invalid_argument("PhaseType: diagonal must be negative");
        double row = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (i != j && T(i, j) < 0.0)
                throw std::invalid_argument("PhaseType: negative off-diagonal");
            row += T(i, j);
        }
        // Tolerance scales with the row magnitude: rates can span 1e-2..1e4.
        double tol = 1e-12 * std::max(1.0, -T(i, i));
        if (row > tol) throw std::invalid_argument("PhaseType: positive row sum");
        if (row < -tol) any_exit = true;
    }
    if (!any_exit) throw std::invalid_argument("PhaseType: no absorbing exit");
}

MomentVector ph_moments(const PhaseType& ph, int n) {
    if (n < 1) throw std::invalid_argument("ph_moments: n >= 1 required");
    const auto p = ph.alpha.size();
    Eigen::MatrixXd negT = -ph.T;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(negT);
    // Repeated solves against -T instead of forming the inverse.
    double rcond_probe = (negT * lu.solve(Eigen::VectorXd::Ones(p)) -
                          Eigen::VectorXd::Ones(p))
                             .cwiseAbs()
                             .maxCoeff();
    if (!std::isfinite(rcond_probe) || rcond_probe > 1e-6)
        throw std::invalid_argument("ph_moments: -T is singular or too ill-conditioned");
    MomentVector out;
    out.m.resize(static_cast<std::size_t>(n));
    Eigen::VectorXd v = Eigen::VectorXd::Ones(p);
    double kfact = 1.0;
    for (int k = 1; k <= n; ++k) {
        v = lu.solve(v);
        kfact *= k;
        out.m[static_cast<std::size_t>(k - 1)] = kfact * ph.alpha.dot(v);
    }
    return out;
}

namespace {

MomentVector erlang_moments(const Erlang& d, int n) {
    MomentVector out;
    out.m.resize(static_cast<std::size_t>(n));
    double acc = 1.0;
    for (int j = 1; j <= n; ++j) {
        acc *= (d.k + j - 1) / d.stage_rate;
        out.m[static_cast<std::size_t>(j - 1)] = acc;
    }
    return out;
}

MomentVector expo_moments(double rate, int n) {
    MomentVector out;
    out.m.resize(static_cast<std::size_t>(n));
    double acc = 1.0;
    for (int j = 1; j <= n; ++j) {
        acc *= j / rate;
        out.m[static_cast<std::size_t>(j - 1)] = acc;
    }
    return out;
}

MomentVector h2_moments(const HyperExp2& d, int n) {
    MomentVector out;
    out.m.resize(static_cast<std::size_t>(n));
    double kfact = 1.0, r1 = 1.0, r2 = 1.0;
    for (int j = 1; j <= n; ++j) {
        kfact *= j;
        r1 *= d.rate1;
        r2 *= d.rate2;
        out.m[static_cast<std::size_t>(j - 1)] =
            kfact * (d.p1 / r1 + (1.0 - d.p1) / r2);
    }
    return out;
}

MomentVector lognormal_moments(const LogNormal& d, int n) {
    MomentVector out;
    out.m.resize(static_cast<std::size_t>(n));
    for (int k = 1; k <= n; ++k)
        out.m[static_cast<std::size_t>(k - 1)] =
            std::exp(k * d.mu + 0.5 * k * k * d.sigma * d.sigma);
    return out;
}

MomentVector gamma_moments(const Gamma& d, int n) {
    MomentVector out;
    out.m.resize(static_cast<std::size_t>(n));
    double acc = 1.0;
    for (int k = 1; k <= n; ++k) {
        acc *= d.scale * (d.shape + k - 1);
        out.m[static_cast<std::size_t>(k - 1)] = acc;
    }
    return out;
}

}  // namespace

MomentVector moments(const Dist& dist, int n) {
    if (n < 1) throw std::invalid_argument("moments: n >= 1 required");
    return std::visit(
        [n](const auto& d) -> MomentVector {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, PhaseType>) return ph_moments(d, n);
            else if constexpr (std::is_same_v<D, Exponential>) return expo_moments(d.rate, n);
            else if constexpr (std::is_same_v<D, Erlang>) return erlang_moments(d, n);
            else if constexpr (std::is_same_v<D, HyperExp2>) return h2_moments(d, n);
            else if constexpr (std::is_same_v<D, LogNormal>) return lognormal_moments(d, n);
            else return gamma_moments(d, n);
        },
        dist);
}

double mean(const Dist& dist) { return moments(dist, 1).m[0]; }

double scv(const Dist& dist) { return scv(moments(dist, 2)); }

Dist scale(const Dist& dist, double rate) {
    if (!(rate > 0.0)) throw std::invalid_argument("scale: rate must be positive");
    return std::visit(
        [rate](const auto& d) -> Dist {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, PhaseType>) {
                PhaseType out = d;
                out.T *= rate;
                return out;
            } else if constexpr (std::is_same_v<D, Exponential>) {
                return Exponential{d.rate * rate};
            } else if constexpr (std::is_same_v<D, Erlang>) {
                return Erlang{d.k, d.stage_rate * rate};
            } else if constexpr (std::is_same_v<D, HyperExp2>) {
                return HyperExp2{d.p1, d.rate1 * rate, d.rate2 * rate};
            } else if constexpr (std::is_same_v<D, LogNormal>) {
                return LogNormal{d.mu - std::log(rate), d.sigma};
            } else {
                return Gamma{d.shape, d.scale / rate};
            }
        },
        dist);
}

HyperExp2 fit_h2_balanced(double mean, double scv) {
    if (!(scv > 1.0))
        throw std::invalid_argument("fit_h2_balanced: requires scv > 1");
    if (!(mean > 0.0))
        throw std::invalid_argument("fit_h2_balanced: requires mean > 0");
    double p1 = 0.5 * (1.0 + std::sqrt((scv - 1.0) / (scv + 1.0)));
    return HyperExp2{p1, 2.0 * p1 / mean, 2.0 * (1.0 - p1) / mean};
}

LogNormal lognormal_from_mean_scv(double mean, double scv) {
    if (!(mean > 0.0) || !(scv > 0.0))
        throw std::invalid_argument("lognormal_from_mean_scv: positive mean and scv required");
    double sigma2 = std::log1p(scv);
    return LogNormal{std::log(mean) - 0.5 * sigma2, std::sqrt(sigma2)};
}

Gamma gamma_from_mean_scv(double mean, double scv) {
    if (!(mean > 0.0) || !(scv > 0.0))
        throw std::invalid_argument("gamma_from_mean_scv: positive mean and scv required");
    return Gamma{1.0 / scv, mean * scv};
}

Erlang erlang_from_mean(int k, double mean) {
    if (k < 1 || !(mean > 0.0))
        throw std::invalid_argument("erlang_from_mean: k >= 1 and mean > 0 required");
    return Erlang{k, k / mean};
}

DistSampler::DistSampler(const Dist& dist) : dist_(dist) {
    if (const auto* ph = std::get_if<PhaseType>(&dist_)) {
        ph->validate();
        const int p = ph->order();
        ph_.alpha_cdf.resize(static_cast<std::size_t>(p));
        double acc = 0.0;
        for (int i = 0; i < p; ++i) {
            acc += ph->alpha[i];
            ph_.alpha_cdf[static_cast<std::size_t>(i)] = acc;
        }
        ph_.alpha_cdf.back() = 1.0;
        ph_.exit_rate.resize(static_cast<std::size_t>(p));
        ph_.rows.resize(static_cast<std::size_t>(p));
        for (int i = 0; i < p; ++i) {
            double exit = -ph->T(i, i);
            ph_.exit_rate[static_cast<std::size_t>(i)] = exit;
            double row_out = 0.0;
            auto& row = ph_.rows[static_cast<std::size_t>(i)];
            for (int j = 0; j < p; ++j) {
                if (j == i) continue;
                double r = ph->T(i, j);
                if (r > 0.0) {
                    row_out += r / exit;
                    row.emplace_back(row_out, j);
                }
            }
            // Remaining mass is absorption.
            row.emplace_back(1.0, p);
        }
    }
}

double DistSampler::draw_ph(Rng& rng) const {
    const int p = static_cast<int>(ph_.exit_rate.size());
    double u = rng.uniform();
    int phase = static_cast<int>(
        std::lower_bound(ph_.alpha_cdf.begin(), ph_.alpha_cdf.end(), u) -
        ph_.alpha_cdf.begin());
    if (phase >= p) phase = p - 1;
    double t = 0.0;
    for (;;) {
        t += rng.expo(ph_.exit_rate[static_cast<std::size_t>(phase)]);
        const auto& row = ph_.rows[static_cast<std::size_t>(phase)];
        double v = rng.uniform();
        int next = row.back().second;
        if (row.size() <= 4) {
            for (const auto& [cum, target] : row) {
                if (v < cum) {
                    next = target;
                    break;
                }
            }
        } else {
            auto it = std::lower_bound(
                row.begin(), row.end(), v,
                [](const std::pair<double, int>& e, double x) { return e.first < x; });
            next = (it == row.end()) ? row.back().second : it->second;
        }
        if (next == p) return t;
        phase = next;
    }
}

double DistSampler::draw(Rng& rng) const {
    return std::visit(
        [this, &rng](const auto& d) -> double {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, PhaseType>) {
                return draw_ph(rng);
            } else if constexpr (std::is_same_v<D, Exponential>) {
                return rng.expo(d.rate);
            } else if constexpr (std::is_same_v<D, Erlang>) {
                return rng.gamma(static_cast<double>(d.k)) / d.stage_rate;
            } else if constexpr (std::is_same_v<D, HyperExp2>) {
                return rng.uniform() < d.p1 ? rng.expo(d.rate1) : rng.expo(d.rate2);
            } else if constexpr (std::is_same_v<D, LogNormal>) {
                return std::exp(d.mu + d.sigma * rng.normal());
            } else {
                return rng.gamma(d.shape) * d.scale;
            }
        },
        dist_);
}

double draw(const Dist& dist, Rng& rng) { return DistSampler(dist).draw(rng); }

namespace {

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

}  // namespace

nlohmann::json dist_to_json(const Dist& dist) {
    using nlohmann::json;
    return std::visit(
        [](const auto& d) -> json {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, PhaseType>) {
                json t = json::array();
                for (Eigen::Index i = 0; i < d.T.rows(); ++i)
                    for (Eigen::Index j = 0; j < d.T.cols(); ++j) t.push_back(d.T(i, j));
                return json{{"kind", "ph"}, {"alpha", vector_to_json(d.alpha)}, {"T", t}};
            } else if constexpr (std::is_same_v<D, Exponential>) {
                return json{{"kind", "exp"}, {"rate", d.rate}};
            } else if constexpr (std::is_same_v<D, Erlang>) {
                return json{{"kind", "erlang"}, {"k", d.k}, {"stage_rate", d.stage_rate}};
            } else if constexpr (std::is_same_v<D, HyperExp2>) {
                return json{{"kind", "h2"}, {"p1", d.p1}, {"rate1", d.rate1}, {"rate2", d.rate2}};
            } else if constexpr (std::is_same_v<D, LogNormal>) {
                return json{{"kind", "lognormal"}, {"mu", d.mu}, {"sigma", d.sigma}};
            } else {
                return json{{"kind", "gamma"}, {"shape", d.shape}, {"scale", d.scale}};
            }
        },
        dist);
}

Dist dist_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "ph") {
        const auto& a = j.at("alpha");
        const auto p = static_cast<Eigen::Index>(a.size());
        PhaseType ph;
        ph.alpha.resize(p);
        for (Eigen::Index i = 0; i < p; ++i)
            ph.alpha[i] = a[static_cast<std::size_t>(i)].get<double>();
        const auto& t = j.at("T");
        if (static_cast<Eigen::Index>(t.size()) != p * p)
            throw std::invalid_argument("dist_from_json: T size mismatch");
        ph.T.resize(p, p);
        for (Eigen::Index i = 0; i < p; ++i)
            for (Eigen::Index jj = 0; jj < p; ++jj)
                ph.T(i, jj) = t[static_cast<std::size_t>(i * p + jj)].get<double>();
        ph.validate();
        return ph;
    }
    if (kind == "exp") return Exponential{j.at("rate").get<double>()};
    if (kind == "erlang")
        return Erlang{j.at("k").get<int>(), j.at("stage_rate").get<double>()};
    if (kind == "h2")
        return HyperExp2{j.at("p1").get<double>(), j.at("rate1").get<double>(),
                         j.at("rate2").get<double>()};
    if (kind == "lognormal")
        return LogNormal{j.at("mu").get<double>(), j.at("sigma").get<double>()};
    if (kind == "gamma")
        return Gamma{j.at("shape").get<double>(), j.at("scale").get<double>()};
    throw std::invalid_argument("dist_from_json: unknown kind '" + kind + "'");
}

}  // namespace qsteady
