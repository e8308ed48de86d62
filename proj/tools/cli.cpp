#include "cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "qsteady/baselines.hpp"
#include "qsteady/datagen.hpp"
#include "qsteady/designopt.hpp"
#include "qsteady/metrics.hpp"
#include "qsteady/mlp.hpp"
#include "qsteady/simqueue.hpp"
#include "qsteady/util.hpp"

namespace qsteady::cli {

namespace {

using nlohmann::json;

// CLI11 consumes argument vectors in reverse order.
void parse_args(CLI::App& app, const std::vector<std::string>& argv) {
    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    app.parse(reversed);
}

std::string iso8601_utc(std::chrono::system_clock::time_point tp) {
    std::time_t t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string file_digest_hex(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot digest " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string data = ss.str();
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(data)));
    return buf;
}

// One manifest per run, written next to the primary output; records enough
// to replay the command and verify its outputs byte for byte.
void write_manifest(const std::filesystem::path& primary_out, const std::string& command,
                    const std::vector<std::string>& argv, std::uint64_t master_seed,
                    const std::vector<std::filesystem::path>& outputs,
                    std::chrono::system_clock::time_point started) {
    json m;
    m["command"] = command;
    m["argv"] = argv;
    m["master_seed"] = master_seed;
    m["schema"] = {{"dataset", 1}, {"model", 1}, {"sim_result", 1},
                   {"report", 1}, {"manifest", 1}};
    m["started_at"] = iso8601_utc(started);
    m["finished_at"] = iso8601_utc(std::chrono::system_clock::now());
    json outs = json::array();
    for (const auto& p : outputs) {
        outs.push_back({{"path", p.string()},
                        {"bytes", std::filesystem::file_size(p)},
                        {"fnv64", file_digest_hex(p)}});
    }
    m["outputs"] = outs;
    std::filesystem::path mpath = primary_out;
    mpath += ".manifest.json";
    std::ofstream os(mpath, std::ios::trunc);
    os << m.dump(2) << '\n';
}

json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    json j;
    in >> j;
    return j;
}

QueueSpec queue_spec_from_json(const json& j) {
    QueueSpec spec;
    spec.arrival = dist_from_json(j.at("arrival"));
    for (const auto& s : j.at("services")) spec.services.push_back(dist_from_json(s));
    spec.c = j.value("c", static_cast<int>(spec.services.size() == 2 ? 2 : 1));
    spec.validate();
    return spec;
}

IdleRule parse_idle_rule(const std::string& s) {
    if (s == "random") return IdleRule::Random;
    if (s == "fastest-first") return IdleRule::FastestFirst;
    if (s == "fixed-priority") return IdleRule::FixedPriority;
    throw CLI::ValidationError("--idle-rule", "expected random|fastest-first|fixed-priority");
}

SystemKind parse_system(const std::string& s) {
    if (s == "ggc") return SystemKind::Ggc;
    if (s == "gg2") return SystemKind::Gg2;
    throw CLI::ValidationError("--system", "expected ggc|gg2");
}

void emit(const json& j, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << j.dump() << '\n';
    } else {
        std::ofstream os(out_path, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + out_path);
        os << j.dump() << '\n';
    }
}

json sim_result_json(const SimResult& res) {
    return json{{"probs", res.probs},
                {"tail_mass", res.tail_mass},
                {"busy", res.per_server_busy},
                {"mean_L", res.mean_L},
                {"seed", res.seed}};
}

// Accepts dataset rows ({"label": ...}), simulate output ({"probs": ...}),
// or bare arrays; returns one probability vector per line.
std::vector<std::vector<double>> load_prob_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.is_object() && j.contains("v") && j.contains("system")) continue;  // header
        if (j.is_array())
            rows.push_back(j.get<std::vector<double>>());
        else if (j.contains("label"))
            rows.push_back(j.at("label").get<std::vector<double>>());
        else if (j.contains("probs"))
            rows.push_back(j.at("probs").get<std::vector<double>>());
        else
            throw std::runtime_error("unrecognized row in " + path.string());
    }
    return rows;
}

RowMeta row_meta_from_json(const json& m) {
    RowMeta meta;
    meta.scv_arrival = m.at("scv_arrival").get<double>();
    meta.scv_services = m.at("scv_services").get<std::vector<double>>();
    meta.c = m.value("c", 1);
    meta.rho = m.contains("measured_rho") ? m.at("measured_rho").get<double>()
                                          : m.value("rho", 0.0);
    return meta;
}

std::vector<RowMeta> load_meta_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<RowMeta> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.is_object() && j.contains("v") && j.contains("system")) continue;  // header
        rows.push_back(row_meta_from_json(j.contains("meta") ? j.at("meta") : j));
    }
    return rows;
}

int cmd_gen_data(const std::vector<std::string>& argv, CLI::App& app) {
    std::string system, out, idle_rule = "random";
    std::size_t count = 0;
    std::uint64_t arrivals = 1'000'000, seed = 1;
    int l = 500, jobs = 0, max_order = 100;
    double warmup = 0.01, rho_min = 0.01, rho_max = 0.95;
    bool augment_swap = false;
    app.add_option("--system", system)->required()->check(CLI::IsMember({"ggc", "gg2"}));
    app.add_option("--count", count)->required();
    app.add_option("--arrivals", arrivals);
    app.add_option("--seed", seed);
    app.add_option("--out", out)->required();
    app.add_option("--l", l);
    app.add_option("--warmup", warmup);
    app.add_option("--idle-rule", idle_rule);
    app.add_option("--jobs", jobs);
    app.add_option("--max-order", max_order);
    app.add_option("--rho-min", rho_min);
    app.add_option("--rho-max", rho_max);
    app.add_flag("--augment-swap", augment_swap);
    parse_args(app, argv);

    auto started = std::chrono::system_clock::now();
    SimConfig sim_cfg;
    sim_cfg.num_arrivals = arrivals;
    sim_cfg.warmup_fraction = warmup;
    sim_cfg.l = l;
    DatagenOptions opts;
    opts.gen.ph.max_order = max_order;
    opts.gen.rho_min = rho_min;
    opts.gen.rho_max = rho_max;
    opts.idle_rule = parse_idle_rule(idle_rule);
    opts.augment_swap = augment_swap;
    opts.jobs = jobs;
    std::size_t written =
        generate_dataset(parse_system(system), count, sim_cfg, seed, out, opts);
    write_manifest(out, "gen-data", argv, seed, {out}, started);
    std::cout << json{{"written", written}, {"out", out}}.dump() << '\n';
    return 0;
}

int cmd_testset2(const std::vector<std::string>& argv, CLI::App& app) {
    std::string system, out;
    app.add_option("--system", system)->required()->check(CLI::IsMember({"ggc", "gg2"}));
    app.add_option("--out", out)->required();
    parse_args(app, argv);

    auto started = std::chrono::system_clock::now();
    auto specs = build_testset2(parse_system(system));
    std::ofstream os(out, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + out);
    os << json{{"v", 1}, {"kind", "testset2"}, {"system", system}}.dump() << '\n';
    for (const auto& d : specs) {
        json services = json::array();
        for (const auto& s : d.spec.services) services.push_back(dist_to_json(s));
        os << json{{"arrival", dist_to_json(d.spec.arrival)},
                   {"services", services},
                   {"c", d.spec.c},
                   {"family", d.family},
                   {"target_rho", d.target_rho}}
                  .dump()
           << '\n';
    }
    os.flush();
    write_manifest(out, "testset2", argv, 0, {out}, started);
    std::cout << json{{"specs", specs.size()}, {"out", out}}.dump() << '\n';
    return 0;
}

int cmd_simulate(const std::vector<std::string>& argv, CLI::App& app) {
    std::string spec_path, out, idle_rule = "random";
    std::uint64_t arrivals = 1'000'000, seed = 1;
    int l = 500;
    double warmup = 0.01;
    app.add_option("--spec", spec_path)->required()->check(CLI::ExistingFile);
    app.add_option("--arrivals", arrivals);
    app.add_option("--seed", seed);
    app.add_option("--l", l);
    app.add_option("--warmup", warmup);
    app.add_option("--idle-rule", idle_rule);
    app.add_option("--out", out);
    parse_args(app, argv);

    auto started = std::chrono::system_clock::now();
    QueueSpec spec = queue_spec_from_json(load_json_file(spec_path));
    SimConfig cfg{arrivals, warmup, seed, l};
    SimResult res = spec.heterogeneous()
                        ? simulate_hetero(spec, cfg, parse_idle_rule(idle_rule))
                        : simulate(spec, cfg);
    emit(sim_result_json(res), out);
    if (!out.empty()) write_manifest(out, "simulate", argv, seed, {out}, started);
    return 0;
}

int cmd_exact_mmc(const std::vector<std::string>& argv, CLI::App& app) {
    double lambda = 1.0, mu = 1.0;
    int c = 1, l = 500;
    std::string out;
    app.add_option("--lambda", lambda);
    app.add_option("--mu", mu);
    app.add_option("--c", c);
    app.add_option("--l", l);
    app.add_option("--out", out);
    parse_args(app, argv);

    auto started = std::chrono::system_clock::now();
    MmcExact res = mmc_exact(lambda, mu, c, l);
    emit(json{{"probs", res.probs},
              {"tail_mass", res.tail_mass},
              {"mean_L", res.mean_L},
              {"p_wait", res.p_wait}},
         out);
    if (!out.empty()) write_manifest(out, "exact-mmc", argv, 0, {out}, started);
    return 0;
}

int cmd_train(const std::vector<std::string>& argv, CLI::App& app) {
    std::string data_path, out, history_path;
    TrainConfig cfg;
    app.add_option("--data", data_path)->required()->check(CLI::ExistingFile);
    app.add_option("--out", out)->required();
    app.add_option("--batch", cfg.batch);
    app.add_option("--lr", cfg.lr);
    app.add_option("--epochs", cfg.epochs);
    app.add_option("--seed", cfg.seed);
    app.add_option("--val-frac", cfg.val_fraction);
    app.add_option("--patience", cfg.patience);
    app.add_option("--history", history_path);
    app.add_flag("--verbose", cfg.verbose);
    parse_args(app, argv);

    auto started = std::chrono::system_clock::now();
    Dataset data = load_dataset(data_path);
    cfg.n_moments = data.n_moments;
    TrainHistory hist;
    Mlp net = train(data, cfg, &hist);
    save_model(net, out);
    std::vector<std::filesystem::path> outputs{out};
    if (!history_path.empty()) {
        json h{{"train_loss", hist.train_loss},
               {"val_loss", hist.val_loss},
               {"val_sae", hist.val_sae},
               {"best_epoch", hist.best_epoch},
               {"best_val_sae", hist.best_val_sae}};
        std::ofstream os(history_path, std::ios::trunc);
        os << h.dump(2) << '\n';
        outputs.push_back(history_path);
    }
    write_manifest(out, "train", argv, cfg.seed, outputs, started);
    std::cout << json{{"model", out},
                      {"best_epoch", hist.best_epoch},
                      {"best_val_sae", hist.best_val_sae}}
                     .dump()
              << '\n';
    return 0;
}

int cmd_infer(const std::vector<std::string>& argv, CLI::App& app) {
    std::string model_path, in_path, out;
    int jobs = 0;
    app.add_option("--model", model_path)->required()->check(CLI::ExistingFile);
    app.add_option("--in", in_path)->required()->check(CLI::ExistingFile);
    app.add_option("--out", out)->required();
    app.add_option("--jobs", jobs);
    parse_args(app, argv);

    auto started = std::chrono::system_clock::now();
    Mlp net = load_model(model_path);
    std::ifstream in(in_path);
    std::vector<std::vector<double>> features;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.is_object() && j.contains("v") && j.contains("system")) continue;  // header
        if (j.is_array())
            features.push_back(j.get<std::vector<double>>());
        else
            features.push_back(j.at("features").get<std::vector<double>>());
    }
    Eigen::MatrixXf X(net.input_dim(), static_cast<Eigen::Index>(features.size()));
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].size() != static_cast<std::size_t>(net.input_dim()))
            throw std::runtime_error("infer: feature row " + std::to_string(i) +
                                     " has dimension " + std::to_string(features[i].size()) +
                                     ", model expects " + std::to_string(net.input_dim()));
        for (std::size_t k = 0; k < features[i].size(); ++k)
            X(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
                static_cast<float>(features[i][k]);
    }
    Eigen::MatrixXf pred = infer_batch(net, X, jobs);
    std::ofstream os(out, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + out);
    for (Eigen::Index i = 0; i < pred.cols(); ++i) {
        std::vector<double> probs(static_cast<std::size_t>(pred.rows()));
        for (Eigen::Index j = 0; j < pred.rows(); ++j)
            probs[static_cast<std::size_t>(j)] = static_cast<double>(pred(j, i));
        os << json{{"probs", probs}}.dump() << '\n';
    }
    os.flush();
    write_manifest(out, "infer", argv, 0, {out}, started);
    return 0;
}

int cmd_evaluate(const std::vector<std::string>& argv, CLI::App& app) {
    std::string truth_path, pred_path, meta_path, out, system = "ggc";
    std::string percentiles_arg = "25,50,75,90,99,99.9", rem_den = "pred";
    app.add_option("--truth", truth_path)->required()->check(CLI::ExistingFile);
    app.add_option("--pred", pred_path)->required()->check(CLI::ExistingFile);
    app.add_option("--meta", meta_path)->check(CLI::ExistingFile);
    app.add_option("--out", out)->required();
    app.add_option("--percentiles", percentiles_arg);
    app.add_option("--system", system)->check(CLI::IsMember({"ggc", "gg2"}));
    app.add_option("--rem-denominator", rem_den)->check(CLI::IsMember({"pred", "truth"}));
    parse_args(app, argv);

    auto started = std::chrono::system_clock::now();
    EvalSet set;
    set.truth = load_prob_rows(truth_path);
    set.pred = load_prob_rows(pred_path);
    set.meta = load_meta_rows(meta_path.empty() ? truth_path : meta_path);
    if (set.truth.size() != set.pred.size() || set.truth.size() != set.meta.size())
        throw std::runtime_error("evaluate: row counts differ (truth=" +
                                 std::to_string(set.truth.size()) +
                                 ", pred=" + std::to_string(set.pred.size()) +
                                 ", meta=" + std::to_string(set.meta.size()) + ")");
    std::vector<double> percentiles;
    std::stringstream ss(percentiles_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) percentiles.push_back(std::stod(tok));
    std::string csv = report_csv(set, parse_system(system), percentiles,
                                 rem_den == "pred" ? RemDenominator::Predicted
                                                   : RemDenominator::Truth);
    std::ofstream os(out, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + out);
    os << csv;
    os.flush();
    write_manifest(out, "evaluate", argv, 0, {out}, started);
    std::cout << json{{"rows", set.truth.size()}, {"report", out}}.dump() << '\n';
    return 0;
}

int cmd_baseline(const std::vector<std::string>& argv, CLI::App& app) {
    TwoMomentSpec spec;
    std::string variant = "klb", out;
    app.add_option("--lambda", spec.lambda);
    app.add_option("--mu", spec.mu);
    app.add_option("--c", spec.c);
    app.add_option("--ca2", spec.ca2);
    app.add_option("--cs2", spec.cs2);
    app.add_option("--variant", variant)
        ->check(CLI::IsMember({"exact-markovian", "allen-cunneen", "klb"}));
    app.add_option("--out", out);
    parse_args(app, argv);

    auto started = std::chrono::system_clock::now();
    MeanVariant v = variant == "klb"             ? MeanVariant::Klb
                    : variant == "allen-cunneen" ? MeanVariant::AllenCunneen
                                                 : MeanVariant::ExactMarkovian;
    emit(json{{"variant", variant},
              {"erlang_c", erlang_c(spec)},
              {"mean_lq", mean_lq(spec, v)},
              {"mean_l", mean_l(spec, v)}},
         out);
    if (!out.empty()) write_manifest(out, "baseline", argv, 0, {out}, started);
    return 0;
}

int cmd_optimize(const std::vector<std::string>& argv, CLI::App& app) {
    std::string model_path, arrival_path, service_path, out, evaluator = "nn";
    CostSpec spec;
    std::uint64_t seed = 1;
    std::uint64_t sim_arrivals = 200'000;
    int jobs = 0;
    bool queue_only = false;
    app.add_option("--model", model_path)->check(CLI::ExistingFile);
    app.add_option("--arrival", arrival_path)->check(CLI::ExistingFile);
    app.add_option("--service-shape", service_path)->check(CLI::ExistingFile);
    app.add_option("--rate-min", spec.rate_min);
    app.add_option("--rate-max", spec.rate_max);
    app.add_option("--rate-step", spec.rate_step);
    app.add_option("--c-min", spec.c_min);
    app.add_option("--c-max", spec.c_max);
    app.add_option("--c1-base", spec.c1_base);
    app.add_option("--c1-exponent", spec.c1_exponent);
    app.add_option("--c2", spec.c2);
    app.add_option("--evaluator", evaluator)
        ->check(CLI::IsMember({"nn", "exact-mmc", "sim"}));
    app.add_option("--sim-arrivals", sim_arrivals);
    app.add_option("--seed", seed);
    app.add_option("--jobs", jobs);
    app.add_flag("--queue-only", queue_only);
    app.add_option("--out", out)->required();
    parse_args(app, argv);

    auto started = std::chrono::system_clock::now();
    LMetric metric = queue_only ? LMetric::QueueOnly : LMetric::System;
    MeanLEvaluator eval;
    if (evaluator == "exact-mmc") {
        eval = make_exact_mmc_evaluator(1.0, metric);
    } else {
        if (arrival_path.empty() || service_path.empty())
            throw std::runtime_error("optimize: --arrival and --service-shape required for " +
                                     evaluator);
        Dist arrival = dist_from_json(load_json_file(arrival_path));
        Dist service = dist_from_json(load_json_file(service_path));
        if (evaluator == "nn") {
            if (model_path.empty()) throw std::runtime_error("optimize: --model required for nn");
            Mlp net = load_model(model_path);
            eval = make_nn_evaluator(net, arrival, service, 4, jobs, metric);
        } else {
            SimConfig cfg;
            cfg.num_arrivals = sim_arrivals;
            cfg.seed = seed;
            eval = make_sim_evaluator(arrival, service, cfg, jobs, metric);
        }
    }
    OptimizeResult res = brute_force(eval, spec);
    std::ofstream os(out, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + out);
    os << "rate,c,mean_l,cost,feasible,is_optimum\n";
    os.setf(std::ios::fixed);
    for (const auto& cell : res.surface) {
        bool opt = cell.feasible && cell.rate == res.best.rate && cell.c == res.best.c;
        os.precision(6);
        os << cell.rate << ',' << cell.c << ',';
        if (cell.feasible)
            os << cell.mean_l << ',' << cell.cost;
        else
            os << ",";
        os << ',' << (cell.feasible ? 1 : 0) << ',' << (opt ? 1 : 0) << '\n';
    }
    os.flush();
    write_manifest(out, "optimize", argv, seed, {out}, started);
    std::cout << json{{"cells", res.surface.size()},
                      {"feasible", res.feasible_cells},
                      {"best_rate", res.best.rate},
                      {"best_c", res.best.c},
                      {"best_mean_l", res.best.mean_l},
                      {"best_cost", res.best.cost}}
                     .dump()
              << '\n';
    return 0;
}

int cmd_ci(const std::vector<std::string>& argv, CLI::App& app) {
    std::string spec_path, out, idle_rule = "random";
    std::uint64_t arrivals = 1'000'000, seed = 1;
    int reps = 10, l = 500, jobs = 0;
    double warmup = 0.01;
    app.add_option("--spec", spec_path)->required()->check(CLI::ExistingFile);
    app.add_option("--arrivals", arrivals);
    app.add_option("--reps", reps);
    app.add_option("--seed", seed);
    app.add_option("--l", l);
    app.add_option("--warmup", warmup);
    app.add_option("--idle-rule", idle_rule);
    app.add_option("--jobs", jobs);
    app.add_option("--out", out);
    parse_args(app, argv);

    auto started = std::chrono::system_clock::now();
    QueueSpec spec = queue_spec_from_json(load_json_file(spec_path));
    (void)parse_idle_rule(idle_rule);
    SimConfig cfg{arrivals, warmup, seed, l};
    CiRecord rec = replication_ci(spec, cfg, reps, jobs);
    emit(json{{"mean", rec.mean},
              {"half_width", rec.half_width},
              {"length", rec.length},
              {"reps", rec.reps},
              {"rep_means", rec.rep_means}},
         out);
    if (!out.empty()) write_manifest(out, "ci", argv, seed, {out}, started);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    static const char* kUsage =
        "usage: qsteady <subcommand> [flags]\n"
        "subcommands: gen-data testset2 simulate exact-mmc train infer evaluate "
        "baseline optimize ci\n";
    if (args.empty()) {
        std::cerr << kUsage;
        return 2;
    }
    const std::string& cmd = args.front();
    std::vector<std::string> rest(args.begin() + 1, args.end());

    CLI::App app{"queueing-surrogate toolkit", "qsteady " + cmd};
    app.allow_extras(false);
    try {
        if (cmd == "gen-data") return cmd_gen_data(rest, app);
        if (cmd == "testset2") return cmd_testset2(rest, app);
        if (cmd == "simulate") return cmd_simulate(rest, app);
        if (cmd == "exact-mmc") return cmd_exact_mmc(rest, app);
        if (cmd == "train") return cmd_train(rest, app);
        if (cmd == "infer") return cmd_infer(rest, app);
        if (cmd == "evaluate") return cmd_evaluate(rest, app);
        if (cmd == "baseline") return cmd_baseline(rest, app);
        if (cmd == "optimize") return cmd_optimize(rest, app);
        if (cmd == "ci") return cmd_ci(rest, app);
        if (cmd == "--help" || cmd == "-h" || cmd == "help") {
            std::cout << kUsage;
            return 0;
        }
        std::cerr << "unknown subcommand '" << cmd << "'\n" << kUsage;
        return 2;
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "argument error: " << e.what() << '\n' << app.help();
        return 2;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"command", cmd}, {"error", e.what()}}.dump() << '\n';
        return 1;
    }
}

}  // namespace qsteady::cli
