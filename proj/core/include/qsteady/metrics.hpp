#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace qsteady {

enum class SystemKind { Ggc, Gg2 };

// Per-row evaluation metadata used for segmentation.
struct RowMeta {
    double scv_arrival = 1.0;
    std::vector<double> scv_services;  // 1 entry (GI/GI/c) or 2 (GI/GI_i/2)
    double rho = 0.0;                  // measured utilization for heterogeneous rows
    int c = 1;
};

struct EvalSet {
    std::vector<std::vector<double>> truth;
    std::vector<std::vector<double>> pred;
    std::vector<RowMeta> meta;  // may be empty when only SAE is needed

    void validate() const;  // equal lengths, uniform l
};

// (1/N) sum_i sum_j |Y_ij - Yhat_ij|; Wasserstein-1 on the integer lattice.
double sae(const EvalSet& set);
double sae_row(std::span<const double> y, std::span<const double> yhat);

// Left-continuous generalized inverse: min{ j : CDF(j) >= q }, capped at l-1
// when the truncated CDF never reaches q.
int quantile_index(std::span<const double> probs, double q);

struct PareResult {
    double value = 0.0;        // percent
    std::size_t excluded = 0;  // true quantile 0, predicted nonzero
    std::size_t used = 0;
};

// Mean absolute relative quantile error at `percentile` (e.g. 50 for the
// median), in percent. Rows where both quantiles are 0 contribute 0; rows
// where only the true quantile is 0 are excluded and counted.
PareResult pare(const EvalSet& set, double percentile);

enum class RemDenominator { Predicted, Truth };

struct RemResult {
    double value = 0.0;        // percent
    std::size_t excluded = 0;  // denominator mean is 0 while the other is not
    std::size_t used = 0;
};

// Relative error of the mean number in system, in percent. The denominator
// is the predicted mean by default.
RemResult rem(const EvalSet& set, RemDenominator den = RemDenominator::Predicted);
RemResult rem_means(std::span<const double> true_means, std::span<const double> pred_means,
                    RemDenominator den = RemDenominator::Predicted);

double distribution_mean(std::span<const double> probs);

// One of the 32 evaluation groups per system: SCV flags (threshold 1),
// utilization quartile, and the server band for the homogeneous system.
struct SegmentKey {
    SystemKind kind = SystemKind::Ggc;
    bool arrival_high = false;
    bool service1_high = false;
    bool service2_high = false;  // GI/GI_i/2 only
    bool servers_high = false;   // GI/GI/c only: c >= 6
    int rho_q = 1;               // 1..4

    // Table-order index in [0, 32).
    int index() const;
    bool operator==(const SegmentKey&) const = default;
};

SegmentKey segment(const RowMeta& meta, SystemKind kind, bool* out_of_domain = nullptr);

// Per-group CSV report: PARE at each requested percentile plus REM, one row
// per segment key (empty groups emitted with count 0).
std::string report_csv(const EvalSet& set, SystemKind kind,
                       const std::vector<double>& percentiles,
                       RemDenominator den = RemDenominator::Predicted);

}  // namespace qsteady
