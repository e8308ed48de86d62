#include "qsteady/simqueue.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <stdexcept>

#include "qsteady/baselines.hpp"
#include "qsteady/rng.hpp"
#include "qsteady/util.hpp"

namespace qsteady {

void QueueSpec::validate() const {
    if (services.empty() || services.size() > 2)
        throw std::invalid_argument("QueueSpec: services must hold 1 or 2 distributions");
    if (services.size() == 2 && c != 2)
        throw std::invalid_argument("QueueSpec: two service distributions force c = 2");
    if (c < 1) throw std::invalid_argument("QueueSpec: c >= 1 required");
}

namespace {

struct Event {
    double time;
    std::uint64_t seq;   // FIFO tie-break on equal timestamps
    int server;          // -1 for arrivals
};

struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
        if (a.time != b.time) return a.time > b.time;
        return a.seq > b.seq;
    }
};

SimResult run_simulation(const QueueSpec& spec, const SimConfig& cfg,
                         IdleRule idle_rule) {
    spec.validate();
    if (cfg.num_arrivals < 1) throw std::invalid_argument("SimConfig: num_arrivals >= 1");
    if (cfg.l < 1) throw std::invalid_argument("SimConfig: l >= 1");
    if (cfg.warmup_fraction < 0.0 || cfg.warmup_fraction >= 1.0)
        throw std::invalid_argument("SimConfig: warmup_fraction in [0, 1)");

    const int c = spec.c;
    const int l = cfg.l;
    const bool hetero = spec.heterogeneous();

    Rng rng(cfg.seed);
    DistSampler arrival_sampler(spec.arrival);
    std::vector<DistSampler> service_samplers;
    service_samplers.reserve(static_cast<std::size_t>(c));
    std::vector<double> service_rate(static_cast<std::size_t>(c), 0.0);
    for (int s = 0; s < c; ++s) {
        const Dist& d = hetero ? spec.services[static_cast<std::size_t>(s)] : spec.services[0];
        service_samplers.emplace_back(d);
        service_rate[static_cast<std::size_t>(s)] = 1.0 / mean(d);
    }

    std::priority_queue<Event, std::vector<Event>, EventOrder> events;
    std::uint64_t seq = 0;

    std::vector<char> busy(static_cast<std::size_t>(c), 0);
    std::vector<double> in_service_arrival(static_cast<std::size_t>(c), 0.0);
    std::deque<double> waiting;  // arrival epochs of queued customers

    const std::uint64_t warmup_arrivals = static_cast<std::uint64_t>(
        cfg.warmup_fraction * static_cast<double>(cfg.num_arrivals));

    double now = 0.0;
    double window_start = 0.0;
    bool collecting = warmup_arrivals == 0;

    std::vector<double> occupancy(static_cast<std::size_t>(l), 0.0);
    double overflow_time = 0.0;
    double weighted_n = 0.0;  // integral of N dt, untruncated
    std::vector<double> busy_time(static_cast<std::size_t>(c), 0.0);
    double sojourn_sum = 0.0;
    std::uint64_t sojourn_count = 0;
    std::uint64_t arrivals_seen = 0;
    std::uint64_t arrivals_in_window = 0;
    int n_in_system = 0;

    auto account = [&](double until) {
        if (!collecting) return;
        double dt = until - now;
        if (dt <= 0.0) return;
        if (n_in_system < l)
            occupancy[static_cast<std::size_t>(n_in_system)] += dt;
        else
            overflow_time += dt;
        weighted_n += dt * n_in_system;
        for (int s = 0; s < c; ++s)
            if (busy[static_cast<std::size_t>(s)]) busy_time[static_cast<std::size_t>(s)] += dt;
    };

    auto start_service = [&](int server, double arrival_epoch) {
        busy[static_cast<std::size_t>(server)] = 1;
        in_service_arrival[static_cast<std::size_t>(server)] = arrival_epoch;
        double d = service_samplers[static_cast<std::size_t>(server)].draw(rng);
        events.push(Event{now + d, seq++, server});
    };

    auto pick_idle_server = [&]() -> int {
        int first = -1, count = 0, last = -1;
        for (int s = 0; s < c; ++s) {
            if (!busy[static_cast<std::size_t>(s)]) {
                if (first < 0) first = s;
                last = s;
                ++count;
            }
        }
        if (count <= 1) return first;
        switch (idle_rule) {
            case IdleRule::FixedPriority:
                return first;
            case IdleRule::FastestFirst: {
                int best = first;
                for (int s = 0; s < c; ++s)
                    if (!busy[static_cast<std::size_t>(s)] &&
                        service_rate[static_cast<std::size_t>(s)] >
                            service_rate[static_cast<std::size_t>(best)])
                        best = s;
                return best;
            }
            case IdleRule::Random: {
                std::uint64_t pick = rng.uniform_int(static_cast<std::uint64_t>(count));
                for (int s = 0; s < c; ++s) {
                    if (!busy[static_cast<std::size_t>(s)]) {
                        if (pick == 0) return s;
                        --pick;
                    }
                }
                return last;
            }
        }
        return first;
    };

    events.push(Event{arrival_sampler.draw(rng), seq++, -1});

    while (!events.empty()) {
        Event ev = events.top();
        events.pop();
        if (ev.server < 0) {
            // Arrival.
            ++arrivals_seen;
            if (!collecting && arrivals_seen > warmup_arrivals) {
                collecting = true;
                window_start = ev.time;
                now = ev.time;
            } else {
                account(ev.time);
                now = ev.time;
            }
            if (collecting) ++arrivals_in_window;
            ++n_in_system;
            int idle = pick_idle_server();
            if (idle >= 0)
                start_service(idle, now);
            else
                waiting.push_back(now);
            if (arrivals_seen == cfg.num_arrivals) break;  // horizon: last arrival epoch
            events.push(Event{now + arrival_sampler.draw(rng), seq++, -1});
        } else {
            // Departure.
            account(ev.time);
            now = ev.time;
            int s = ev.server;
            --n_in_system;
            if (collecting) {
                double arrived = in_service_arrival[static_cast<std::size_t>(s)];
                if (arrived >= window_start) {
                    sojourn_sum += now - arrived;
                    ++sojourn_count;
                }
            }
            busy[static_cast<std::size_t>(s)] = 0;
            if (!waiting.empty()) {
                double arrived = waiting.front();
                waiting.pop_front();
                start_service(s, arrived);
            }
        }
    }

    SimResult res;
    res.seed = cfg.seed;
    res.probs.assign(static_cast<std::size_t>(l), 0.0);
    double total = overflow_time;
    for (double t : occupancy) total += t;
    if (total <= 0.0) {
        // Degenerate window (all arrivals inside warm-up): report the empty state.
        res.probs[0] = 1.0;
        res.per_server_busy.assign(static_cast<std::size_t>(c), 0.0);
        return res;
    }
    for (int j = 0; j < l; ++j)
        res.probs[static_cast<std::size_t>(j)] = occupancy[static_cast<std::size_t>(j)] / total;
    res.tail_mass = overflow_time / total;
    res.mean_L = weighted_n / total;
    res.sim_time = total;
    res.per_server_busy.resize(static_cast<std::size_t>(c));
    for (int s = 0; s < c; ++s)
        res.per_server_busy[static_cast<std::size_t>(s)] =
            busy_time[static_cast<std::size_t>(s)] / total;
    res.mean_sojourn = sojourn_count > 0 ? sojourn_sum / static_cast<double>(sojourn_count) : 0.0;
    res.observed_lambda = static_cast<double>(arrivals_in_window) / total;
    res.completions = sojourn_count;
    return res;
}

}  // namespace

SimResult simulate(const QueueSpec& spec, const SimConfig& cfg) {
    if (spec.heterogeneous())
        throw std::invalid_argument("simulate: use simulate_hetero for two service distributions");
    return run_simulation(spec, cfg, IdleRule::FixedPriority);
}

SimResult simulate_hetero(const QueueSpec& spec, const SimConfig& cfg, IdleRule idle_rule) {
    if (!spec.heterogeneous())
        throw std::invalid_argument("simulate_hetero: spec must carry two service distributions");
    return run_simulation(spec, cfg, idle_rule);
}

CiRecord ci_from_samples(const std::vector<double>& samples) {
    if (samples.size() < 2)
        throw std::invalid_argument("ci_from_samples: need at least two replications");
    CiRecord rec;
    rec.reps = static_cast<int>(samples.size());
    rec.rep_means = samples;
    double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / (n - 1.0));
    boost::math::students_t dist(n - 1.0);
    double t = boost::math::quantile(dist, 0.975);
    rec.mean = mean;
    rec.half_width = t * sd / std::sqrt(n);
    rec.length = 2.0 * rec.half_width;
    return rec;
}

CiRecord replication_ci(const QueueSpec& spec, const SimConfig& cfg, int reps, int jobs) {
    if (reps < 2) throw std::invalid_argument("replication_ci: reps >= 2");
    std::vector<double> means(static_cast<std::size_t>(reps), 0.0);
    parallel_for(static_cast<std::size_t>(reps), jobs, [&](std::size_t r) {
        SimConfig rep_cfg = cfg;
        rep_cfg.seed = derive_seed(cfg.seed, r);
        SimResult res = spec.heterogeneous() ? simulate_hetero(spec, rep_cfg)
                                             : simulate(spec, rep_cfg);
        means[r] = res.mean_L;
    });
    return ci_from_samples(means);
}

MmcExact mmc_exact(double lambda, double mu, int c, int l) {
    if (c < 1 || l < 1) throw std::invalid_argument("mmc_exact: c >= 1 and l >= 1");
    if (!(lambda > 0.0) || !(mu > 0.0))
        throw std::invalid_argument("mmc_exact: rates must be positive");
    if (!(lambda < c * mu)) throw UnstableQueueError("mmc_exact: unstable parameters");

    const double a = lambda / mu;
    const double rho = a / c;
    // Normalizer: sum of a^j/j! below c plus the closed-form geometric block.
    double norm = 1.0;
    double term = 1.0;
    for (int j = 1; j < c; ++j) {
        term *= a / j;
        norm += term;
    }
    double term_c = term * a / c;  // a^c / c!
    norm += term_c / (1.0 - rho);

    MmcExact out;
    out.probs.assign(static_cast<std::size_t>(l), 0.0);
    double p = 1.0 / norm;
    for (int j = 0; j < l; ++j) {
        if (j > 0) p *= (j < c) ? a / j : rho;
        out.probs[static_cast<std::size_t>(j)] = p;
    }
    // Tail beyond l-1.
    if (l - 1 >= c) {
        out.tail_mass = out.probs.back() * rho / (1.0 - rho);
    } else {
        double sum = 0.0;
        for (double v : out.probs) sum += v;
        out.tail_mass = 1.0 - sum;
    }

    TwoMomentSpec tm{lambda, mu, c, 1.0, 1.0};
    out.p_wait = erlang_c(tm);
    out.mean_L = a + out.p_wait * rho / (1.0 - rho);
    return out;
}

}  // namespace qsteady
