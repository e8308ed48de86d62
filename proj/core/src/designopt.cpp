#include "qsteady/designopt.hpp"

#include <cmath>
#include <span>
#include <stdexcept>

#include "qsteady/baselines.hpp"
#include "qsteady/datagen.hpp"
#include "qsteady/metrics.hpp"
#include "qsteady/util.hpp"

namespace qsteady {

int CostSpec::rate_count() const {
    if (!(rate_step > 0.0) || !(rate_max > rate_min))
        throw std::invalid_argument("CostSpec: empty rate domain");
    return static_cast<int>(std::llround((rate_max - rate_min) / rate_step));
}

std::size_t CostSpec::grid_size() const {
    if (c_max < c_min) throw std::invalid_argument("CostSpec: empty c domain");
    return static_cast<std::size_t>(rate_count()) *
           static_cast<std::size_t>(c_max - c_min + 1);
}

double cost(const CostSpec& spec, double rate, int c, double expected_l) {
    return spec.c1_base * std::pow(1.0 + rate, spec.c1_exponent) * c +
           spec.c2 * expected_l;
}

OptimizeResult brute_force(const MeanLEvaluator& evaluator, const CostSpec& spec) {
    const int rates = spec.rate_count();
    std::vector<std::pair<double, int>> cells;
    cells.reserve(spec.grid_size());
    for (int c = spec.c_min; c <= spec.c_max; ++c)
        for (int r = 0; r < rates; ++r)
            cells.emplace_back(spec.rate_min + r * spec.rate_step, c);

    std::vector<std::optional<double>> els = evaluator(cells);
    if (els.size() != cells.size())
        throw std::runtime_error("brute_force: evaluator returned wrong cell count");

    OptimizeResult out;
    out.surface.reserve(cells.size());
    bool have_best = false;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        GridCell cell;
        cell.rate = cells[i].first;
        cell.c = cells[i].second;
        cell.feasible = els[i].has_value() && std::isfinite(*els[i]) && *els[i] >= 0.0;
        if (cell.feasible) {
            cell.mean_l = *els[i];
            cell.cost = cost(spec, cell.rate, cell.c, cell.mean_l);
            ++out.feasible_cells;
            // Cells arrive in (c asc, rate asc) order, so strict improvement
            // already breaks ties toward lower c then lower rate.
            if (!have_best || cell.cost < out.best.cost) {
                out.best = cell;
                have_best = true;
            }
        }
        out.surface.push_back(cell);
    }
    if (!have_best) throw std::runtime_error("brute_force: no feasible grid cell");
    return out;
}

namespace {

double queue_only_mean(std::span<const double> probs, int c) {
    double lq = 0.0;
    for (std::size_t j = static_cast<std::size_t>(c) + 1; j < probs.size(); ++j)
        lq += static_cast<double>(j - static_cast<std::size_t>(c)) * probs[j];
    return lq;
}

}  // namespace

MeanLEvaluator make_exact_mmc_evaluator(double lambda, LMetric metric) {
    return [lambda, metric](const std::vector<std::pair<double, int>>& cells) {
        std::vector<std::optional<double>> out(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto [rate, c] = cells[i];
            if (lambda < c * rate) {
                TwoMomentSpec tm{lambda, rate, c, 1.0, 1.0};
                out[i] = metric == LMetric::System
                             ? mean_l(tm, MeanVariant::ExactMarkovian)
                             : mean_lq(tm, MeanVariant::ExactMarkovian);
            }
        }
        return out;
    };
}

MeanLEvaluator make_nn_evaluator(const Mlp& net, Dist arrival, Dist service_shape,
                                 int n_moments, int jobs, LMetric metric) {
    return [net, arrival = std::move(arrival), service_shape = std::move(service_shape),
            n_moments, jobs, metric](const std::vector<std::pair<double, int>>& cells) {
        Eigen::MatrixXf X(net.input_dim(), static_cast<Eigen::Index>(cells.size()));
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto [rate, c] = cells[i];
            QueueSpec spec;
            spec.arrival = arrival;
            spec.services.push_back(scale(service_shape, rate));
            spec.c = c;
            std::vector<double> f = preprocess(spec, n_moments);
            if (f.size() != static_cast<std::size_t>(net.input_dim()))
                throw std::invalid_argument("nn evaluator: feature dimension mismatch");
            for (std::size_t k = 0; k < f.size(); ++k)
                X(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
                    static_cast<float>(f[k]);
        }
        Eigen::MatrixXf pred = infer_batch(net, X, jobs);
        std::vector<std::optional<double>> out(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            std::vector<double> probs(static_cast<std::size_t>(pred.rows()));
            for (Eigen::Index j = 0; j < pred.rows(); ++j)
                probs[static_cast<std::size_t>(j)] =
                    static_cast<double>(pred(j, static_cast<Eigen::Index>(i)));
            out[i] = metric == LMetric::System ? distribution_mean(probs)
                                               : queue_only_mean(probs, cells[i].second);
        }
        return out;
    };
}

MeanLEvaluator make_sim_evaluator(Dist arrival, Dist service_shape, SimConfig cfg, int jobs,
                                  LMetric metric) {
    return [arrival = std::move(arrival), service_shape = std::move(service_shape), cfg,
            jobs, metric](const std::vector<std::pair<double, int>>& cells) {
        std::vector<std::optional<double>> out(cells.size());
        parallel_for(cells.size(), jobs, [&](std::size_t i) {
            const auto [rate, c] = cells[i];
            if (!(1.0 < c * rate)) return;  // unstable cell
            QueueSpec spec;
            spec.arrival = arrival;
            spec.services.push_back(scale(service_shape, rate));
            spec.c = c;
            SimConfig cell_cfg = cfg;
            cell_cfg.seed = derive_seed(cfg.seed, i);
            SimResult res = simulate(spec, cell_cfg);
            if (metric == LMetric::System) {
                out[i] = res.mean_L;
            } else {
                double lq = queue_only_mean(res.probs, c);
                // Tail states add (j - c) each; approximate with the band edge.
                lq += res.tail_mass * (static_cast<double>(res.probs.size()) - c);
                out[i] = lq;
            }
        });
        return out;
    };
}

}  // namespace qsteady
