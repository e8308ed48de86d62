#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "qsteady/mlp.hpp"
#include "qsteady/simqueue.hpp"
#include "qsteady/util.hpp"

using namespace qsteady;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "qsteady_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

// Small synthetic dataset: M/M/c features -> exact truncated labels.
Dataset exact_mmc_dataset(int rows, int l, std::uint64_t seed) {
    std::vector<LabeledInstance> insts;
    Rng rng(seed);
    for (int i = 0; i < rows; ++i) {
        int c = 1 + static_cast<int>(rng.uniform_int(4));
        double rho = rng.uniform(0.1, 0.9);
        QueueSpec spec;
        spec.arrival = Exponential{1.0};
        spec.services.push_back(scale_service_for_rho(Exponential{1.0}, 1.0, c, rho));
        spec.c = c;
        LabeledInstance inst;
        inst.features = preprocess(spec, 4);
        MmcExact exact = mmc_exact(1.0, 1.0 / (c * rho), c, l);
        inst.label = exact.probs;
        inst.meta.c = c;
        inst.meta.scv_arrival = 1.0;
        inst.meta.scv_services = {1.0};
        inst.meta.measured_rho = rho;
        insts.push_back(std::move(inst));
    }
    return dataset_from_instances(SystemKind::Ggc, insts, 4, l);
}

}  // namespace

TEST_CASE("softmax output is a probability vector") {
    Mlp net = Mlp::init(9, kDefaultHiddenWidths, 500, 3);
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXf x(9, 1);
        for (int k = 0; k < 9; ++k) x(k, 0) = static_cast<float>(rng.uniform(-3.0, 3.0));
        Eigen::MatrixXf y = net.forward(x);
        REQUIRE(y.rows() == 500);
        double sum = 0.0;
        for (int j = 0; j < 500; ++j) {
            CHECK(y(j, 0) >= 0.0f);
            sum += static_cast<double>(y(j, 0));
        }
        CHECK(std::abs(sum - 1.0) <= 1e-7);
    }
}

TEST_CASE("all-zero parameters give the uniform distribution") {
    Mlp net = Mlp::init(4, std::vector<int>{8}, 10, 1);
    for (auto& w : net.W) w.setZero();
    for (auto& b : net.b) b.setZero();
    Eigen::MatrixXf x = Eigen::MatrixXf::Constant(4, 1, 0.7f);
    Eigen::MatrixXf y = net.forward(x);
    for (int j = 0; j < 10; ++j) CHECK(y(j, 0) == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("softmax is invariant to shifting the output biases") {
    MlpT<double> net = MlpT<double>::init(3, std::vector<int>{5}, 7, 2);
    Eigen::MatrixXd x(3, 1);
    x << 0.3, -1.2, 2.0;
    Eigen::MatrixXd before = net.forward(x);
    net.b.back().array() += 3.7;
    Eigen::MatrixXd after = net.forward(x);
    for (int j = 0; j < 7; ++j)
        CHECK(after(j, 0) == doctest::Approx(before(j, 0)).epsilon(1e-12));
}

TEST_CASE("loss identities and hand value") {
    Eigen::MatrixXf y(4, 1), yhat(4, 1);
    y << 1.0f, 0.0f, 0.0f, 0.0f;
    yhat << 0.5f, 0.5f, 0.0f, 0.0f;
    CHECK(loss_eq1<float>(y, y) == doctest::Approx(0.0));
    CHECK(loss_eq1<float>(y, yhat) == doctest::Approx(1.5).epsilon(1e-6));

    // Duplicating the batch leaves the per-row average unchanged.
    Eigen::MatrixXf y2(4, 2), yhat2(4, 2);
    y2 << y, y;
    yhat2 << yhat, yhat;
    CHECK(loss_eq1<float>(y2, yhat2) == doctest::Approx(1.5).epsilon(1e-6));

    Eigen::MatrixXf wrong(3, 1);
    CHECK_THROWS_AS(loss_eq1<float>(y, wrong), std::invalid_argument);
}

TEST_CASE("analytic gradient matches central finite differences") {
    using Net = MlpT<double>;
    Net net = Net::init(2, std::vector<int>{3}, 4, 11);
    Eigen::MatrixXd X(2, 3), Y(4, 3);
    Rng rng(12);
    for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.uniform(-1.0, 1.0);
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (int j = 0; j < 4; ++j) {
            Y(j, c) = rng.uniform(0.0, 1.0);
            sum += Y(j, c);
        }
        Y.col(c) /= sum;
    }

    auto [loss, grads] = loss_and_grad<double>(net, X, Y);
    CHECK(std::isfinite(loss));

    const double h = 1e-6;
    double max_rel = 0.0;
    Rng pick(13);
    for (int probe = 0; probe < 10; ++probe) {
        std::size_t layer = pick.uniform_int(net.W.size());
        bool weight = pick.uniform() < 0.8;
        Eigen::Index idx;
        double analytic;
        if (weight) {
            idx = static_cast<Eigen::Index>(
                pick.uniform_int(static_cast<std::uint64_t>(net.W[layer].size())));
            analytic = grads.W[layer].data()[idx];
        } else {
            idx = static_cast<Eigen::Index>(
                pick.uniform_int(static_cast<std::uint64_t>(net.b[layer].size())));
            analytic = grads.b[layer].data()[idx];
        }
        Net plus = net, minus = net;
        if (weight) {
            plus.W[layer].data()[idx] += h;
            minus.W[layer].data()[idx] -= h;
        } else {
            plus.b[layer].data()[idx] += h;
            minus.b[layer].data()[idx] -= h;
        }
        double lp = loss_eq1<double>(Y, plus.forward(X));
        double lm = loss_eq1<double>(Y, minus.forward(X));
        double fd = (lp - lm) / (2.0 * h);
        double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-8});
        max_rel = std::max(max_rel, rel);
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("training memorizes a single instance") {
    Dataset data = exact_mmc_dataset(1, 20, 21);
    TrainConfig cfg;
    cfg.batch = 1;
    cfg.epochs = 400;
    cfg.val_fraction = 0.0;
    cfg.patience = 0;
    cfg.lr_patience = 0;
    cfg.hidden_widths = {16, 16};
    cfg.seed = 2;
    Mlp net = train(data, cfg);
    Eigen::MatrixXf pred = infer_batch(net, data.X, 1);
    CHECK(loss_eq1<float>(data.Y, pred) < 0.01);
}

TEST_CASE("training on exact labels reaches a small held-out SAE quickly") {
    Dataset data = exact_mmc_dataset(1500, 60, 31);
    auto [train_set, test_set] = split_dataset(data, 0.2, 5);
    TrainConfig cfg;
    cfg.batch = 64;
    cfg.epochs = 60;
    cfg.patience = 15;
    cfg.hidden_widths = {64, 64};
    cfg.seed = 3;
    TrainHistory hist;
    Mlp net = train(train_set, cfg, &hist);
    CHECK_FALSE(hist.train_loss.empty());
    Eigen::MatrixXf pred = infer_batch(net, test_set.X, 1);
    CHECK(sae_batch(test_set.Y, pred) < 0.08);
    CHECK(hist.best_epoch >= 0);
}

TEST_CASE("training aborts with a diagnostic on divergence") {
    Dataset data = exact_mmc_dataset(64, 20, 41);
    TrainConfig cfg;
    cfg.lr = 1e10;  // guaranteed blow-up
    cfg.epochs = 50;
    cfg.hidden_widths = {16};
    cfg.val_fraction = 0.0;
    try {
        train(data, cfg);
        // Overflow to NaN may take a few steps but must be caught.
        FAIL("expected TrainDivergence");
    } catch (const TrainDivergence& e) {
        CHECK(std::string(e.what()).find("lr=") != std::string::npos);
    }
}

TEST_CASE("model file round trip is bit-exact") {
    Mlp net = Mlp::init(9, std::vector<int>{12, 7}, 25, 77);
    auto path = temp_file("model.bin");
    save_model(net, path);
    Mlp back = load_model(path);
    REQUIRE(back.layer_count() == net.layer_count());
    for (std::size_t k = 0; k < net.W.size(); ++k) {
        CHECK(back.W[k] == net.W[k]);
        CHECK(back.b[k] == net.b[k]);
    }
    Eigen::MatrixXf x = Eigen::MatrixXf::Random(9, 5);
    CHECK(net.forward(x) == back.forward(x));

    // Saving the loaded model reproduces the same bytes.
    auto path2 = temp_file("model2.bin");
    save_model(back, path2);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);

    std::ofstream(temp_file("garbage.bin"), std::ios::binary) << "not a model";
    CHECK_THROWS(load_model(temp_file("garbage.bin")));
}

TEST_CASE("batched inference equals the single-column forward pass") {
    Mlp net = Mlp::init(9, std::vector<int>{32, 32}, 40, 99);
    Eigen::MatrixXf X = Eigen::MatrixXf::Random(9, 700);
    Eigen::MatrixXf batch = infer_batch(net, X, 2);
    for (int i : {0, 13, 511, 512, 699}) {
        Eigen::VectorXf single = net.forward_one(X.col(i));
        CHECK(batch.col(i) == single);
    }
    // Permuting rows permutes outputs.
    std::vector<int> perm(700);
    for (int i = 0; i < 700; ++i) perm[static_cast<std::size_t>(i)] = (i * 37) % 700;
    Eigen::MatrixXf Xp(9, 700);
    for (int i = 0; i < 700; ++i) Xp.col(i) = X.col(perm[static_cast<std::size_t>(i)]);
    Eigen::MatrixXf batch_p = infer_batch(net, Xp, 1);
    for (int i : {0, 50, 699}) {
        Eigen::VectorXf expected = net.forward_one(Xp.col(i));
        CHECK(batch_p.col(i) == expected);
    }

    Eigen::MatrixXf wrong = Eigen::MatrixXf::Random(5, 3);
    CHECK_THROWS_AS(infer_batch(net, wrong, 1), std::invalid_argument);
}

TEST_CASE("moment sweep trains one model per n") {
    auto build = [&](int n) {
        // Same 200 underlying M/M/c specs for every n; features rebuilt per n.
        std::vector<LabeledInstance> insts;
        Rng rng(1234);
        for (int i = 0; i < 200; ++i) {
            int c = 1 + static_cast<int>(rng.uniform_int(3));
            double rho = rng.uniform(0.2, 0.8);
            QueueSpec spec;
            spec.arrival = Exponential{1.0};
            spec.services.push_back(scale_service_for_rho(Exponential{1.0}, 1.0, c, rho));
            spec.c = c;
            LabeledInstance inst;
            inst.features = preprocess(spec, n);
            inst.label = mmc_exact(1.0, 1.0 / (c * rho), c, 30).probs;
            inst.meta.c = c;
            insts.push_back(std::move(inst));
        }
        Dataset all = dataset_from_instances(SystemKind::Ggc, insts, n, 30);
        return split_dataset(all, 0.25, 9);
    };
    TrainConfig cfg;
    cfg.batch = 32;
    cfg.epochs = 15;
    cfg.patience = 0;
    cfg.hidden_widths = {32};
    const int ns[] = {1, 2};
    auto points = moment_sweep(build, ns, cfg);
    REQUIRE(points.size() == 2);
    CHECK(points[0].n == 1);
    CHECK(points[1].n == 2);
    CHECK(points[0].test_sae > 0.0);
    CHECK(points[1].test_sae > 0.0);
    // Feature dimension follows n: 2n+1.
    auto [tr1, te1] = build(1);
    CHECK(tr1.n_features() == 3);
}
