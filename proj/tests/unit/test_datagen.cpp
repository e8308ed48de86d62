#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "qsteady/datagen.hpp"
#include "qsteady/util.hpp"

using namespace qsteady;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "qsteady_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("service scaling hits the target utilization exactly") {
    Dist unit = Exponential{1.0};
    Dist scaled = scale_service_for_rho(unit, 1.0, 2, 0.5);
    CHECK(mean(scaled) == doctest::Approx(1.0).epsilon(1e-12));  // E[S] = c*rho
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        SpecDraw d = gen_ggc_spec(seed);
        double offered = mean(d.spec.services[0]) / d.spec.c;  // lambda = 1
        CHECK(offered == doctest::Approx(d.target_rho).epsilon(1e-9));
        CHECK(d.spec.c >= 1);
        CHECK(d.spec.c <= 10);
        CHECK(d.target_rho >= 0.01);
        CHECK(d.target_rho <= 0.95);
        CHECK(std::abs(mean(d.spec.arrival) - 1.0) < 1e-8);
    }
}

TEST_CASE("server count histogram is uniform (chi-squared at 1%)") {
    std::vector<int> counts(10, 0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        SpecDraw d = gen_ggc_spec(derive_seed(5000, static_cast<std::uint64_t>(i)));
        counts[static_cast<std::size_t>(d.spec.c - 1)]++;
    }
    double chi2 = 0.0;
    for (int c : counts) {
        double diff = c - n / 10.0;
        chi2 += diff * diff / (n / 10.0);
    }
    CHECK(chi2 < 21.666);  // chi-squared 99th percentile, 9 dof
}

TEST_CASE("heterogeneous split respects the rate floor and adds up") {
    for (std::uint64_t seed = 100; seed < 140; ++seed) {
        SpecDraw d = gen_gg2_spec(seed);
        REQUIRE(d.spec.services.size() == 2);
        double mu1 = 1.0 / mean(d.spec.services[0]);
        double mu2 = 1.0 / mean(d.spec.services[1]);
        double mu = 1.0 / d.target_rho;
        CHECK(mu1 + mu2 == doctest::Approx(mu).epsilon(1e-9));
        CHECK(mu1 >= 0.01 - 1e-12);
        CHECK(mu2 >= 0.01 - 1e-12);
        CHECK(mu1 >= mu2);  // canonical ordering
    }
}

TEST_CASE("measured busy fraction spans the target range") {
    // Reduced-scale version of the generator coverage sweep: at full scale
    // the measured range is about [0.005, 0.955].
    const int n = 600;
    std::vector<double> measured(n, 0.0);
    parallel_for(n, 0, [&](std::size_t i) {
        SpecDraw d = gen_gg2_spec(derive_seed(8000, i));
        SimConfig cfg;
        cfg.num_arrivals = 30'000;
        cfg.seed = derive_seed(8001, i);
        LabeledInstance inst = label(d, cfg);
        measured[i] = inst.meta.measured_rho;
    });
    double lo = 1.0, hi = 0.0;
    for (double m : measured) {
        lo = std::min(lo, m);
        hi = std::max(hi, m);
    }
    CHECK(lo < 0.05);
    CHECK(hi > 0.90);
}

TEST_CASE("preprocess log-moment layout") {
    QueueSpec spec;
    spec.arrival = Exponential{1.0};
    spec.services.push_back(Exponential{0.5});
    spec.c = 7;
    std::vector<double> f = preprocess(spec, 4);
    REQUIRE(f.size() == 9);
    CHECK(f[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(f[1] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(f[2] == doctest::Approx(std::log(6.0)).epsilon(1e-12));
    CHECK(f[3] == doctest::Approx(std::log(24.0)).epsilon(1e-12));
    CHECK(f[8] == doctest::Approx(7.0));

    // Scaling a service by rate 2 shifts its k-th log-moment by -k log 2.
    QueueSpec scaled = spec;
    scaled.services[0] = scale(spec.services[0], 2.0);
    std::vector<double> g = preprocess(scaled, 4);
    for (int k = 0; k < 4; ++k)
        CHECK(g[static_cast<std::size_t>(4 + k)] ==
              doctest::Approx(f[static_cast<std::size_t>(4 + k)] - (k + 1) * std::log(2.0))
                  .epsilon(1e-9));
}

TEST_CASE("preprocess arrival feature is pinned at log 1 = 0 for unit-mean arrivals") {
    for (std::uint64_t seed = 300; seed < 310; ++seed) {
        SpecDraw d = gen_ggc_spec(seed);
        std::vector<double> f = preprocess(d.spec, 4);
        REQUIRE(f.size() == 9);
        CHECK(std::abs(f[0]) < 1e-10);
    }
}

TEST_CASE("heterogeneous features order blocks by descending rate") {
    for (std::uint64_t seed = 400; seed < 420; ++seed) {
        SpecDraw d = gen_gg2_spec(seed);
        std::vector<double> f = preprocess(d.spec, 4);
        REQUIRE(f.size() == 12);
        // First service block has the smaller mean (higher rate).
        CHECK(f[4] <= f[8] + 1e-12);
    }
}

TEST_CASE("label produces a valid 500-bin vector with flags") {
    SpecDraw d;
    d.spec.arrival = Exponential{1.0};
    d.spec.services.push_back(Exponential{2.0});
    d.spec.c = 1;
    d.target_rho = 0.5;
    d.scv_arrival = 1.0;
    d.scv_services = {1.0};
    SimConfig cfg;
    cfg.num_arrivals = 500'000;
    cfg.seed = 17;
    LabeledInstance inst = label(d, cfg);
    REQUIRE(inst.label.size() == 500);
    double sum = 0.0;
    for (double p : inst.label) {
        CHECK(p >= 0.0);
        sum += p;
    }
    CHECK(sum >= 0.999);
    CHECK_FALSE(inst.meta.flagged);
    CHECK(std::abs(inst.meta.measured_rho - 0.5) < 0.01);

    // Forced near-saturation: the tail flag must fire.
    SpecDraw hot = d;
    hot.spec.services[0] = Exponential{1.0 / 0.995};
    hot.target_rho = 0.995;
    LabeledInstance flagged = label(hot, cfg);
    CHECK(flagged.meta.flagged);
    CHECK(flagged.meta.tail_mass > 1e-3);
}

TEST_CASE("testset2 grids have the published sizes") {
    auto ggc = build_testset2(SystemKind::Ggc);
    auto gg2 = build_testset2(SystemKind::Gg2);
    CHECK(ggc.size() == 6000);
    CHECK(gg2.size() == 3600);

    // Utilization grid: 20 points stepping 0.05 from 0.01 to 0.96.
    std::set<double> rhos;
    for (const auto& d : ggc) rhos.insert(d.target_rho);
    CHECK(rhos.size() == 20);
    CHECK(*rhos.begin() == doctest::Approx(0.01));
    CHECK(*rhos.rbegin() == doctest::Approx(0.96));

    // Homogeneous: offered load matches the grid point.
    const auto& probe = ggc[1234];
    CHECK(mean(probe.spec.services[0]) / probe.spec.c ==
          doctest::Approx(probe.target_rho).epsilon(1e-9));

    // Heterogeneous: even split of the aggregate rate.
    const auto& h = gg2[100];
    CHECK(1.0 / mean(h.spec.services[0]) ==
          doctest::Approx(1.0 / mean(h.spec.services[1])).epsilon(1e-9));
}

TEST_CASE("generate_dataset is deterministic, resumable and loadable") {
    SimConfig cfg;
    cfg.num_arrivals = 20'000;
    cfg.seed = 0;  // per-row seeds derive from the master seed
    DatagenOptions opts;
    opts.jobs = 2;

    auto out1 = temp_file("ds_a.jsonl");
    auto out2 = temp_file("ds_b.jsonl");
    std::filesystem::remove(out1);
    std::filesystem::remove(out2);

    CHECK(generate_dataset(SystemKind::Ggc, 40, cfg, 999, out1, opts) == 40);
    CHECK(generate_dataset(SystemKind::Ggc, 40, cfg, 999, out2, opts) == 40);
    CHECK(slurp(out1) == slurp(out2));

    // Resume: a 25-row prefix continued to 40 rows is byte-identical.
    auto partial = temp_file("ds_c.jsonl");
    std::filesystem::remove(partial);
    CHECK(generate_dataset(SystemKind::Ggc, 25, cfg, 999, partial, opts) == 25);
    CHECK(generate_dataset(SystemKind::Ggc, 40, cfg, 999, partial, opts) == 15);
    CHECK(slurp(partial) == slurp(out1));
    // Already complete: nothing to do.
    CHECK(generate_dataset(SystemKind::Ggc, 40, cfg, 999, partial, opts) == 0);

    Dataset data = load_dataset(out1);
    CHECK(data.rows() == 40);
    CHECK(data.n_features() == 9);
    CHECK(data.l == 500);
    CHECK(data.system == SystemKind::Ggc);
    for (const auto& m : data.meta) CHECK(m.n_moments == 4);

    auto [train_part, holdout] = split_dataset(data, 0.25, 7);
    CHECK(train_part.rows() == 30);
    CHECK(holdout.rows() == 10);
}

TEST_CASE("augment-swap doubles heterogeneous rows with swapped blocks") {
    SimConfig cfg;
    cfg.num_arrivals = 10'000;
    DatagenOptions opts;
    opts.augment_swap = true;
    opts.jobs = 2;
    auto out = temp_file("ds_swap.jsonl");
    std::filesystem::remove(out);
    CHECK(generate_dataset(SystemKind::Gg2, 6, cfg, 321, out, opts) == 6);
    Dataset data = load_dataset(out);
    CHECK(data.rows() == 12);
    CHECK(data.n_features() == 12);
    // Adjacent pairs share labels with swapped service blocks.
    for (int i = 0; i < data.rows(); i += 2) {
        CHECK(data.Y.col(i) == data.Y.col(i + 1));
        for (int k = 0; k < 4; ++k) {
            CHECK(data.X(4 + k, i) == data.X(8 + k, i + 1));
            CHECK(data.X(8 + k, i) == data.X(4 + k, i + 1));
        }
    }
}

TEST_CASE("instance JSON round trip") {
    SpecDraw d = gen_ggc_spec(42);
    SimConfig cfg;
    cfg.num_arrivals = 5'000;
    cfg.seed = 4;
    LabeledInstance inst = label(d, cfg);
    LabeledInstance back = instance_from_json(instance_to_json(inst));
    CHECK(back.features == inst.features);
    CHECK(back.label == inst.label);
    CHECK(back.meta.seed == inst.meta.seed);
    CHECK(back.meta.measured_rho == inst.meta.measured_rho);
    CHECK(back.meta.flagged == inst.meta.flagged);
}
