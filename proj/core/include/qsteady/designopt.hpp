#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "qsteady/dists.hpp"
#include "qsteady/mlp.hpp"
#include "qsteady/simqueue.hpp"

namespace qsteady {

// Server-design cost model: Cost(rate, c) = c1_base*(1+rate)^c1_exponent*c
// + c2*E[L], swept over a box grid. The rate grid is half-open
// [rate_min, rate_max): the defaults give exactly 200 rates x 10 c values.
struct CostSpec {
    double c1_base = 500.0;
    double c1_exponent = 5.0;
    double c2 = 100.0;
    double rate_min = 0.1;
    double rate_max = 0.3;
    double rate_step = 0.001;
    int c_min = 1;
    int c_max = 10;

    int rate_count() const;
    std::size_t grid_size() const;
};

double cost(const CostSpec& spec, double rate, int c, double expected_l);

// Mean number in system per (rate, c) cell; nullopt marks an infeasible cell.
using MeanLEvaluator =
    std::function<std::vector<std::optional<double>>(const std::vector<std::pair<double, int>>&)>;

struct GridCell {
    double rate = 0.0;
    int c = 0;
    double mean_l = 0.0;
    double cost = 0.0;
    bool feasible = false;
};

struct OptimizeResult {
    GridCell best;
    std::vector<GridCell> surface;  // c-major, rate-minor order
    std::size_t feasible_cells = 0;
};

// Evaluates every grid cell and returns the argmin; ties break toward lower
// c, then lower rate. Throws if no cell is feasible.
OptimizeResult brute_force(const MeanLEvaluator& evaluator, const CostSpec& spec);

// The cost term as written charges the full E[L]; the queue-only variant
// charges waiting jobs only.
enum class LMetric { System, QueueOnly };

// E[L] evaluators: exact Markovian, trained-surrogate, and simulation-backed.
MeanLEvaluator make_exact_mmc_evaluator(double lambda = 1.0,
                                        LMetric metric = LMetric::System);
// Scales `service_shape` (unit mean) to each cell's rate and runs the
// network on the preprocessed features.
MeanLEvaluator make_nn_evaluator(const Mlp& net, Dist arrival, Dist service_shape,
                                 int n_moments = 4, int jobs = 0,
                                 LMetric metric = LMetric::System);
MeanLEvaluator make_sim_evaluator(Dist arrival, Dist service_shape, SimConfig cfg,
                                  int jobs = 0, LMetric metric = LMetric::System);

}  // namespace qsteady
