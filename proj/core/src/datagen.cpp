#include "qsteady/datagen.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>

#include "qsteady/rng.hpp"
#include "qsteady/util.hpp"

namespace qsteady {

namespace {

// A fresh sub-seed per sampled distribution so a rejected PH draw cannot
// shift the rest of the stream.
PhaseType sample_ph_sub(Rng& rng, const PhSamplerConfig& cfg) {
    for (int i = 0; i < 16; ++i) {
        try {
            return sample_ph(rng.raw(), cfg);
        } catch (const PhRejectionError&) {
        }
    }
    throw PhRejectionError("sample_ph_sub: repeated rejection across sub-seeds");
}

}  // namespace

Dist scale_service_for_rho(const Dist& unit_service, double lambda, int c, double rho) {
    if (!(rho > 0.0)) throw std::invalid_argument("scale_service_for_rho: rho > 0 required");
    // rho = lambda / (c * mu)  =>  mu = lambda / (c * rho); E[S] becomes c*rho/lambda.
    double mu = lambda / (c * rho);
    return scale(unit_service, mu);
}

SpecDraw gen_ggc_spec(std::uint64_t seed, const GenConfig& cfg) {
    Rng rng(seed);
    SpecDraw out;
    out.seed = seed;
    out.family = "ph";
    PhaseType arrival = sample_ph_sub(rng, cfg.ph);
    PhaseType service = sample_ph_sub(rng, cfg.ph);
    int c = 1 + static_cast<int>(rng.uniform_int(10));
    double rho = rng.uniform(cfg.rho_min, cfg.rho_max);
    out.spec.arrival = arrival;
    out.spec.services.push_back(scale_service_for_rho(service, 1.0, c, rho));
    out.spec.c = c;
    out.target_rho = rho;
    out.scv_arrival = scv(out.spec.arrival);
    out.scv_services.push_back(scv(out.spec.services[0]));
    return out;
}

SpecDraw gen_gg2_spec(std::uint64_t seed, const GenConfig& cfg) {
    Rng rng(seed);
    SpecDraw out;
    out.seed = seed;
    out.family = "ph";
    PhaseType arrival = sample_ph_sub(rng, cfg.ph);
    PhaseType service1 = sample_ph_sub(rng, cfg.ph);
    PhaseType service2 = sample_ph_sub(rng, cfg.ph);

    double inv_mu = rng.uniform(cfg.rho_min, cfg.rho_max);
    double mu = 1.0 / inv_mu;
    double mu1 = rng.uniform(cfg.phi, mu - cfg.phi);
    double mu2 = mu - mu1;
    // Canonical ordering: faster server first.
    if (mu1 < mu2) {
        std::swap(mu1, mu2);
        std::swap(service1, service2);
    }
    out.spec.arrival = arrival;
    out.spec.services.push_back(scale(static_cast<Dist>(service1), mu1));
    out.spec.services.push_back(scale(static_cast<Dist>(service2), mu2));
    out.spec.c = 2;
    out.target_rho = inv_mu;  // the GI/GI/1 aggregate utilization the split aimed for
    out.scv_arrival = scv(out.spec.arrival);
    out.scv_services.push_back(scv(out.spec.services[0]));
    out.scv_services.push_back(scv(out.spec.services[1]));
    return out;
}

std::vector<double> preprocess(const QueueSpec& spec, int n) {
    if (n < 1) throw std::invalid_argument("preprocess: n >= 1 required");
    spec.validate();
    std::vector<double> features;
    features.reserve(static_cast<std::size_t>(spec.heterogeneous() ? 3 * n : 2 * n + 1));
    auto push_log_moments = [&](const Dist& d) {
        MomentVector mv = moments(d, n);
        for (double m : mv.m) {
            if (!(m > 0.0) || !std::isfinite(m))
                throw std::invalid_argument("preprocess: nonpositive or non-finite moment");
            features.push_back(std::log(m));
        }
    };
    push_log_moments(spec.arrival);
    if (spec.heterogeneous()) {
        // Canonical order: higher-rate block (smaller mean) first.
        const Dist* s1 = &spec.services[0];
        const Dist* s2 = &spec.services[1];
        if (mean(*s1) > mean(*s2)) std::swap(s1, s2);
        push_log_moments(*s1);
        push_log_moments(*s2);
    } else {
        push_log_moments(spec.services[0]);
        features.push_back(static_cast<double>(spec.c));
    }
    return features;
}

LabeledInstance label(const SpecDraw& draw, const SimConfig& cfg, int n, IdleRule idle_rule) {
    LabeledInstance inst;
    inst.features = preprocess(draw.spec, n);
    SimResult res = draw.spec.heterogeneous()
                        ? simulate_hetero(draw.spec, cfg, idle_rule)
                        : simulate(draw.spec, cfg);
    inst.label = std::move(res.probs);
    inst.meta.seed = draw.seed;
    inst.meta.family = draw.family;
    inst.meta.target_rho = draw.target_rho;
    inst.meta.measured_rho =
        res.per_server_busy.empty()
            ? 0.0
            : std::accumulate(res.per_server_busy.begin(), res.per_server_busy.end(), 0.0) /
                  static_cast<double>(res.per_server_busy.size());
    inst.meta.scv_arrival = draw.scv_arrival;
    inst.meta.scv_services = draw.scv_services;
    inst.meta.c = draw.spec.c;
    inst.meta.n_moments = n;
    inst.meta.tail_mass = res.tail_mass;
    inst.meta.flagged = res.tail_mass > kTailDelta;
    return inst;
}

namespace {

Dist testset2_family(const std::string& name) {
    if (name == "M") return Exponential{1.0};
    if (name == "E4") return erlang_from_mean(4, 1.0);
    if (name == "H2(4)") return fit_h2_balanced(1.0, 4.0);
    if (name == "LN(0.25)") return lognormal_from_mean_scv(1.0, 0.25);
    if (name == "LN(4)") return lognormal_from_mean_scv(1.0, 4.0);
    if (name == "G(4)") return gamma_from_mean_scv(1.0, 4.0);
    throw std::invalid_argument("testset2_family: unknown family " + name);
}

}  // namespace

std::vector<SpecDraw> build_testset2(SystemKind kind) {
    const std::vector<std::string> arrivals = {"E4", "LN(0.25)", "H2(4)", "LN(4)", "G(4)"};
    const std::vector<std::string> services = {"M", "E4", "LN(0.25)", "H2(4)", "LN(4)", "G(4)"};
    std::vector<double> rhos;
    for (int i = 0; i < 20; ++i) rhos.push_back(0.01 + 0.05 * i);

    std::vector<SpecDraw> out;
    std::uint64_t idx = 0;
    if (kind == SystemKind::Ggc) {
        out.reserve(arrivals.size() * services.size() * 10 * rhos.size());
        for (const auto& a : arrivals)
            for (const auto& s : services)
                for (int c = 1; c <= 10; ++c)
                    for (double rho : rhos) {
                        SpecDraw d;
                        d.seed = idx++;
                        d.family = a + "/" + s;
                        d.spec.arrival = testset2_family(a);
                        d.spec.services.push_back(
                            scale_service_for_rho(testset2_family(s), 1.0, c, rho));
                        d.spec.c = c;
                        d.target_rho = rho;
                        d.scv_arrival = scv(d.spec.arrival);
                        d.scv_services.push_back(scv(d.spec.services[0]));
                        out.push_back(std::move(d));
                    }
        return out;
    }
    out.reserve(arrivals.size() * services.size() * services.size() * rhos.size());
    for (const auto& a : arrivals)
        for (const auto& s1 : services)
            for (const auto& s2 : services)
                for (double rho : rhos) {
                    // Even split of the aggregate rate mu = 1/rho between the
                    // two servers; the source grid does not fix the split.
                    double mu_i = 1.0 / (2.0 * rho);
                    SpecDraw d;
                    d.seed = idx++;
                    d.family = a + "/" + s1 + "+" + s2;
                    d.spec.arrival = testset2_family(a);
                    d.spec.services.push_back(scale(testset2_family(s1), mu_i));
                    d.spec.services.push_back(scale(testset2_family(s2), mu_i));
                    d.spec.c = 2;
                    d.target_rho = rho;
                    d.scv_arrival = scv(d.spec.arrival);
                    d.scv_services.push_back(scv(d.spec.services[0]));
                    d.scv_services.push_back(scv(d.spec.services[1]));
                    out.push_back(std::move(d));
                }
    return out;
}

nlohmann::json instance_to_json(const LabeledInstance& inst) {
    nlohmann::json j;
    j["features"] = inst.features;
    j["label"] = inst.label;
    j["meta"] = {{"seed", inst.meta.seed},
                 {"family", inst.meta.family},
                 {"target_rho", inst.meta.target_rho},
                 {"measured_rho", inst.meta.measured_rho},
                 {"scv_arrival", inst.meta.scv_arrival},
                 {"scv_services", inst.meta.scv_services},
                 {"c", inst.meta.c},
                 {"n", inst.meta.n_moments},
                 {"tail_mass", inst.meta.tail_mass},
                 {"flagged", inst.meta.flagged}};
    return j;
}

LabeledInstance instance_from_json(const nlohmann::json& j) {
    LabeledInstance inst;
    inst.features = j.at("features").get<std::vector<double>>();
    inst.label = j.at("label").get<std::vector<double>>();
    const auto& m = j.at("meta");
    inst.meta.seed = m.at("seed").get<std::uint64_t>();
    inst.meta.family = m.at("family").get<std::string>();
    inst.meta.target_rho = m.at("target_rho").get<double>();
    inst.meta.measured_rho = m.at("measured_rho").get<double>();
    inst.meta.scv_arrival = m.at("scv_arrival").get<double>();
    inst.meta.scv_services = m.at("scv_services").get<std::vector<double>>();
    inst.meta.c = m.at("c").get<int>();
    inst.meta.n_moments = m.at("n").get<int>();
    inst.meta.tail_mass = m.at("tail_mass").get<double>();
    inst.meta.flagged = m.at("flagged").get<bool>();
    return inst;
}

namespace {

nlohmann::json dataset_header(SystemKind kind, int n, int l) {
    return nlohmann::json{{"v", 1},
                          {"system", kind == SystemKind::Ggc ? "ggc" : "gg2"},
                          {"n", n},
                          {"l", l}};
}

std::size_t count_existing_rows(const std::filesystem::path& path,
                                const nlohmann::json& expected_header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return 0;
    std::string line;
    if (!std::getline(in, line)) return 0;
    nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
    if (header.is_discarded() || header != expected_header)
        throw std::runtime_error("generate_dataset: existing file has a different header: " +
                                 path.string());
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
    }
    // A file without a trailing newline holds a half-written row; refuse to
    // resume on top of it.
    in.clear();
    in.seekg(-1, std::ios::end);
    char last = '\n';
    in.get(last);
    if (last != '\n')
        throw std::runtime_error("generate_dataset: truncated final row in " + path.string() +
                                 "; remove the file to regenerate");
    return rows;
}

}  // namespace

std::size_t generate_dataset(SystemKind kind, std::size_t count, const SimConfig& sim_cfg,
                             std::uint64_t master_seed, const std::filesystem::path& out,
                             const DatagenOptions& opts) {
    if (count < 1) throw std::invalid_argument("generate_dataset: count >= 1");
    const nlohmann::json header = dataset_header(kind, opts.n_moments, sim_cfg.l);

    std::size_t existing_lines = 0;
    bool file_exists = std::filesystem::exists(out);
    if (file_exists) existing_lines = count_existing_rows(out, header);
    const std::size_t rows_per_instance = (opts.augment_swap && kind == SystemKind::Gg2) ? 2 : 1;
    if (existing_lines % rows_per_instance != 0)
        throw std::runtime_error("generate_dataset: row count in " + out.string() +
                                 " is not a multiple of the augmentation factor");
    const std::size_t existing = existing_lines / rows_per_instance;
    if (existing >= count) return 0;

    std::ofstream os;
    if (file_exists && existing > 0) {
        os.open(out, std::ios::app);
    } else {
        os.open(out, std::ios::trunc);
        os << header.dump() << '\n';
    }
    if (!os) throw std::runtime_error("generate_dataset: cannot open " + out.string());

    const std::size_t todo = count - existing;
    std::vector<std::string> lines(todo);
    parallel_for(todo, opts.jobs, [&](std::size_t i) {
        std::size_t row = existing + i;
        std::uint64_t seed = derive_seed(master_seed, row);
        SpecDraw draw = kind == SystemKind::Ggc ? gen_ggc_spec(seed, opts.gen)
                                                : gen_gg2_spec(seed, opts.gen);
        SimConfig cfg = sim_cfg;
        cfg.seed = derive_seed(master_seed, row ^ 0x517cc1b727220a95ull);
        LabeledInstance inst = label(draw, cfg, opts.n_moments, opts.idle_rule);
        std::string text = instance_to_json(inst).dump();
        if (opts.augment_swap && kind == SystemKind::Gg2) {
            LabeledInstance swapped = inst;
            // Swapped feature ordering for the same label: blocks 2 and 3 trade places.
            int n = opts.n_moments;
            for (int k = 0; k < n; ++k)
                std::swap(swapped.features[static_cast<std::size_t>(n + k)],
                          swapped.features[static_cast<std::size_t>(2 * n + k)]);
            std::swap(swapped.meta.scv_services[0], swapped.meta.scv_services[1]);
            swapped.meta.family += "+swap";
            text += '\n';
            text += instance_to_json(swapped).dump();
        }
        lines[i] = std::move(text);
    });
    for (const auto& line : lines) os << line << '\n';
    os.flush();
    if (!os) throw std::runtime_error("generate_dataset: write failure on " + out.string());
    return todo;
}

Dataset dataset_from_instances(SystemKind kind, const std::vector<LabeledInstance>& rows,
                               int n_moments, int l) {
    Dataset data;
    data.system = kind;
    data.n_moments = n_moments;
    data.l = l;
    if (rows.empty()) return data;
    const auto nf = rows.front().features.size();
    data.X.resize(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(rows.size()));
    data.Y.resize(l, static_cast<Eigen::Index>(rows.size()));
    data.meta.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& inst = rows[i];
        if (inst.features.size() != nf)
            throw std::invalid_argument("dataset_from_instances: ragged feature rows");
        if (inst.label.size() != static_cast<std::size_t>(l))
            throw std::invalid_argument("dataset_from_instances: label length mismatch");
        for (std::size_t f = 0; f < nf; ++f)
            data.X(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(i)) =
                static_cast<float>(inst.features[f]);
        for (int j = 0; j < l; ++j)
            data.Y(j, static_cast<Eigen::Index>(i)) = static_cast<float>(
                inst.label[static_cast<std::size_t>(j)]);
        data.meta.push_back(inst.meta);
    }
    return data;
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_dataset: empty file");
    nlohmann::json header = nlohmann::json::parse(line);
    SystemKind kind = header.at("system").get<std::string>() == "ggc" ? SystemKind::Ggc
                                                                      : SystemKind::Gg2;
    int n = header.at("n").get<int>();
    int l = header.at("l").get<int>();
    std::vector<LabeledInstance> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        rows.push_back(instance_from_json(nlohmann::json::parse(line)));
    }
    return dataset_from_instances(kind, rows, n, l);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double holdout_fraction,
                                          std::uint64_t seed) {
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
        throw std::invalid_argument("split_dataset: holdout_fraction in [0, 1)");
    const int n = data.rows();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) {
        int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    int holdout = static_cast<int>(std::lround(holdout_fraction * n));
    auto take = [&](int from, int to) {
        Dataset part;
        part.system = data.system;
        part.n_moments = data.n_moments;
        part.l = data.l;
        int m = to - from;
        part.X.resize(data.X.rows(), m);
        part.Y.resize(data.Y.rows(), m);
        part.meta.reserve(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) {
            int src = order[static_cast<std::size_t>(from + i)];
            part.X.col(i) = data.X.col(src);
            part.Y.col(i) = data.Y.col(src);
            part.meta.push_back(data.meta[static_cast<std::size_t>(src)]);
        }
        return part;
    };
    return {take(holdout, n), take(0, holdout)};
}

}  // namespace qsteady
