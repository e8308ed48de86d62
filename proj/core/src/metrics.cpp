#include "qsteady/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace qsteady {

void EvalSet::validate() const {
    if (truth.size() != pred.size())
        throw std::invalid_argument("EvalSet: truth/pred row counts differ");
    if (!meta.empty() && meta.size() != truth.size())
        throw std::invalid_argument("EvalSet: meta row count differs");
    if (truth.empty()) return;
    std::size_t l = truth.front().size();
    for (const auto& row : truth)
        if (row.size() != l) throw std::invalid_argument("EvalSet: ragged truth rows");
    for (const auto& row : pred)
        if (row.size() != l) throw std::invalid_argument("EvalSet: ragged pred rows");
}

double sae_row(std::span<const double> y, std::span<const double> yhat) {
    double s = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) s += std::abs(y[j] - yhat[j]);
    return s;
}

double sae(const EvalSet& set) {
    set.validate();
    if (set.truth.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < set.truth.size(); ++i)
        s += sae_row(set.truth[i], set.pred[i]);
    return s / static_cast<double>(set.truth.size());
}

int quantile_index(std::span<const double> probs, double q) {
    double cdf = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
        cdf += probs[j];
        if (cdf >= q) return static_cast<int>(j);
    }
    return static_cast<int>(probs.size()) - 1;
}

PareResult pare(const EvalSet& set, double percentile) {
    set.validate();
    if (!(percentile > 0.0) || !(percentile < 100.0))
        throw std::invalid_argument("pare: percentile must lie in (0, 100)");
    const double q = percentile / 100.0;
    PareResult out;
    double sum = 0.0;
    for (std::size_t i = 0; i < set.truth.size(); ++i) {
        int qy = quantile_index(set.truth[i], q);
        int qh = quantile_index(set.pred[i], q);
        if (qy == 0) {
            if (qh == 0) {
                ++out.used;  // matching degenerate quantiles contribute 0
            } else {
                ++out.excluded;
            }
            continue;
        }
        sum += std::abs(static_cast<double>(qy - qh)) / static_cast<double>(qy);
        ++out.used;
    }
    out.value = out.used > 0 ? 100.0 * sum / static_cast<double>(out.used) : 0.0;
    return out;
}

double distribution_mean(std::span<const double> probs) {
    double m = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) m += static_cast<double>(j) * probs[j];
    return m;
}

RemResult rem_means(std::span<const double> true_means, std::span<const double> pred_means,
                    RemDenominator den) {
    if (true_means.size() != pred_means.size())
        throw std::invalid_argument("rem_means: size mismatch");
    RemResult out;
    double sum = 0.0;
    for (std::size_t i = 0; i < true_means.size(); ++i) {
        double ly = true_means[i], lh = pred_means[i];
        double denom = den == RemDenominator::Predicted ? lh : ly;
        double numer = std::abs(ly - lh);
        if (denom == 0.0) {
            if (numer == 0.0)
                ++out.used;  // both means zero: exact agreement
            else
                ++out.excluded;
            continue;
        }
        sum += numer / denom;
        ++out.used;
    }
    out.value = out.used > 0 ? 100.0 * sum / static_cast<double>(out.used) : 0.0;
    return out;
}

RemResult rem(const EvalSet& set, RemDenominator den) {
    set.validate();
    std::vector<double> ty(set.truth.size()), py(set.pred.size());
    for (std::size_t i = 0; i < set.truth.size(); ++i) {
        ty[i] = distribution_mean(set.truth[i]);
        py[i] = distribution_mean(set.pred[i]);
    }
    return rem_means(ty, py, den);
}

int SegmentKey::index() const {
    int q = rho_q - 1;
    if (kind == SystemKind::Ggc)
        return (arrival_high ? 16 : 0) + (service1_high ? 8 : 0) + 2 * q +
               (servers_high ? 1 : 0);
    return (arrival_high ? 16 : 0) + (service1_high ? 8 : 0) +
           (service2_high ? 4 : 0) + q;
}

SegmentKey segment(const RowMeta& meta, SystemKind kind, bool* out_of_domain) {
    SegmentKey key;
    key.kind = kind;
    key.arrival_high = meta.scv_arrival > 1.0;
    if (meta.scv_services.empty())
        throw std::invalid_argument("segment: meta lacks service SCVs");
    key.service1_high = meta.scv_services[0] > 1.0;
    if (kind == SystemKind::Gg2) {
        if (meta.scv_services.size() < 2)
            throw std::invalid_argument("segment: heterogeneous meta needs two service SCVs");
        key.service2_high = meta.scv_services[1] > 1.0;
    } else {
        key.servers_high = meta.c >= 6;
    }
    bool ood = false;
    double rho = meta.rho;
    if (rho < 0.01) {
        ood = true;
    } else if (rho > 0.95) {
        ood = true;
        rho = 0.95;
    }
    // Right-closed bands: (0.25, 0.5] is Q2, so rho = 0.25 lands in Q1.
    if (rho <= 0.25)
        key.rho_q = 1;
    else if (rho <= 0.5)
        key.rho_q = 2;
    else if (rho <= 0.75)
        key.rho_q = 3;
    else
        key.rho_q = 4;
    if (out_of_domain) *out_of_domain = ood;
    return key;
}

namespace {

std::string format_percentile(double p) {
    std::ostringstream os;
    if (p == std::floor(p))
        os << static_cast<long long>(p);
    else
        os << p;
    return os.str();
}

SegmentKey key_from_index(int idx, SystemKind kind) {
    SegmentKey key;
    key.kind = kind;
    key.arrival_high = (idx & 16) != 0;
    key.service1_high = (idx & 8) != 0;
    if (kind == SystemKind::Ggc) {
        key.rho_q = ((idx >> 1) & 3) + 1;
        key.servers_high = (idx & 1) != 0;
    } else {
        key.service2_high = (idx & 4) != 0;
        key.rho_q = (idx & 3) + 1;
    }
    return key;
}

}  // namespace

std::string report_csv(const EvalSet& set, SystemKind kind,
                       const std::vector<double>& percentiles, RemDenominator den) {
    set.validate();
    if (set.meta.size() != set.truth.size())
        throw std::invalid_argument("report_csv: per-row meta required");

    std::vector<std::vector<std::size_t>> groups(32);
    for (std::size_t i = 0; i < set.meta.size(); ++i)
        groups[static_cast<std::size_t>(segment(set.meta[i], kind).index())].push_back(i);

    std::ostringstream os;
    os << "group,";
    if (kind == SystemKind::Ggc)
        os << "arrival_scv,service_scv,rho_q,servers,";
    else
        os << "arrival_scv,service1_scv,service2_scv,rho_q,";
    os << "count";
    for (double p : percentiles) os << ",pare_" << format_percentile(p);
    os << ",pare_excluded,rem,rem_excluded\n";

    auto band = [](bool high) { return high ? "High" : "Low"; };
    for (int idx = 0; idx < 32; ++idx) {
        SegmentKey key = key_from_index(idx, kind);
        const auto& rows = groups[static_cast<std::size_t>(idx)];
        EvalSet sub;
        for (std::size_t r : rows) {
            sub.truth.push_back(set.truth[r]);
            sub.pred.push_back(set.pred[r]);
        }
        os << (idx + 1) << ',' << band(key.arrival_high) << ','
           << band(key.service1_high) << ',';
        if (kind == SystemKind::Ggc)
            os << key.rho_q << ',' << band(key.servers_high) << ',';
        else
            os << band(key.service2_high) << ',' << key.rho_q << ',';
        os << rows.size();
        std::size_t pare_excluded = 0;
        std::ostringstream vals;
        vals.setf(std::ios::fixed);
        vals.precision(2);
        for (double p : percentiles) {
            if (rows.empty()) {
                vals << ",0.00";
                continue;
            }
            PareResult pr = pare(sub, p);
            pare_excluded += pr.excluded;
            vals << ',' << pr.value;
        }
        RemResult rr = rows.empty() ? RemResult{} : rem(sub, den);
        vals << ',' << pare_excluded << ',' << rr.value << ',' << rr.excluded;
        os << vals.str() << '\n';
    }
    return os.str();
}

}  // namespace qsteady
