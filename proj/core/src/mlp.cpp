#include "qsteady/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "qsteady/util.hpp"

namespace qsteady {

namespace {

struct AdamState {
    std::vector<Eigen::MatrixXf> mW, vW;
    std::vector<Eigen::VectorXf> mb, vb;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;

    explicit AdamState(const Mlp& net) {
        for (std::size_t k = 0; k < net.W.size(); ++k) {
            mW.push_back(Eigen::MatrixXf::Zero(net.W[k].rows(), net.W[k].cols()));
            vW.push_back(Eigen::MatrixXf::Zero(net.W[k].rows(), net.W[k].cols()));
            mb.push_back(Eigen::VectorXf::Zero(net.b[k].size()));
            vb.push_back(Eigen::VectorXf::Zero(net.b[k].size()));
        }
    }

    void update(Mlp& net, const MlpGrads<float>& g, double lr) {
        ++step;
        const float b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
        const float corr1 = 1.0f - std::pow(b1, static_cast<float>(step));
        const float corr2 = 1.0f - std::pow(b2, static_cast<float>(step));
        const float rate = static_cast<float>(lr);
        const float e = static_cast<float>(eps);
        for (std::size_t k = 0; k < net.W.size(); ++k) {
            mW[k] = b1 * mW[k] + (1.0f - b1) * g.W[k];
            vW[k] = b2 * vW[k].array().matrix() +
                    (1.0f - b2) * g.W[k].array().square().matrix();
            net.W[k].array() -= rate * (mW[k].array() / corr1) /
                                ((vW[k].array() / corr2).sqrt() + e);
            mb[k] = b1 * mb[k] + (1.0f - b1) * g.b[k];
            vb[k] = b2 * vb[k].array().matrix() +
                    (1.0f - b2) * g.b[k].array().square().matrix();
            net.b[k].array() -= rate * (mb[k].array() / corr1) /
                                ((vb[k].array() / corr2).sqrt() + e);
        }
    }
};

}  // namespace

double sae_batch(const Eigen::MatrixXf& Y, const Eigen::MatrixXf& Yhat) {
    if (Y.rows() != Yhat.rows() || Y.cols() != Yhat.cols())
        throw std::invalid_argument("sae_batch: shape mismatch");
    if (Y.cols() == 0) return 0.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < Y.cols(); ++i)
        for (Eigen::Index j = 0; j < Y.rows(); ++j)
            total += std::abs(static_cast<double>(Y(j, i)) - static_cast<double>(Yhat(j, i)));
    return total / static_cast<double>(Y.cols());
}

Mlp train(const Dataset& data, const TrainConfig& cfg, TrainHistory* history) {
    if (data.rows() < 1) throw std::invalid_argument("train: empty dataset");
    if (cfg.batch < 1 || !(cfg.lr > 0.0))
        throw std::invalid_argument("train: batch >= 1 and lr > 0 required");

    auto [train_set, val_set] = split_dataset(data, cfg.val_fraction, derive_seed(cfg.seed, 0));
    const int n_train = train_set.rows();
    const int n_val = val_set.rows();
    if (n_train < 1) throw std::invalid_argument("train: no training rows after split");

    Mlp net = Mlp::init(data.n_features(), cfg.hidden_widths, data.l, derive_seed(cfg.seed, 1));
    AdamState adam(net);
    Rng shuffle_rng(derive_seed(cfg.seed, 2));

    std::vector<int> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);

    Mlp best = net;
    double best_sae = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    int stale = 0;
    int lr_stale = 0;
    double lr = cfg.lr;

    TrainHistory local;
    TrainHistory& hist = history ? *history : local;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int i = n_train - 1; i > 0; --i) {
            int j = static_cast<int>(shuffle_rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
        double epoch_loss = 0.0;
        int batches = 0;
        for (int start = 0; start < n_train; start += cfg.batch) {
            int bsz = std::min(cfg.batch, n_train - start);
            Eigen::MatrixXf xb(train_set.X.rows(), bsz), yb(train_set.Y.rows(), bsz);
            for (int i = 0; i < bsz; ++i) {
                int src = order[static_cast<std::size_t>(start + i)];
                xb.col(i) = train_set.X.col(src);
                yb.col(i) = train_set.Y.col(src);
            }
            auto [loss, grads] = loss_and_grad<float>(net, xb, yb);
            if (!std::isfinite(loss)) {
                std::ostringstream os;
                os << "train: non-finite loss at epoch " << epoch << ", batch " << batches
                   << " (lr=" << lr << ", batch=" << cfg.batch
                   << ", init=fan-in uniform, seed=" << cfg.seed << ")";
                throw TrainDivergence(os.str());
            }
            adam.update(net, grads, lr);
            epoch_loss += loss;
            ++batches;
        }
        epoch_loss /= std::max(1, batches);
        hist.train_loss.push_back(epoch_loss);

        if (n_val > 0) {
            Eigen::MatrixXf val_pred = infer_batch(net, val_set.X, 1);
            double vloss = loss_eq1<float>(val_set.Y, val_pred);
            double vsae = sae_batch(val_set.Y, val_pred);
            hist.val_loss.push_back(vloss);
            hist.val_sae.push_back(vsae);
            if (cfg.verbose)
                std::fprintf(stderr, "epoch %d train_loss=%.5f val_loss=%.5f val_sae=%.5f lr=%g\n",
                             epoch, epoch_loss, vloss, vsae, lr);
            if (vsae < best_sae) {
                best_sae = vsae;
                best = net;
                best_epoch = epoch;
                stale = 0;
                lr_stale = 0;
            } else {
                ++stale;
                ++lr_stale;
                if (cfg.lr_patience > 0 && lr_stale >= cfg.lr_patience && lr > cfg.min_lr) {
                    lr = std::max(cfg.min_lr, lr * cfg.lr_decay);
                    lr_stale = 0;
                }
                if (cfg.patience > 0 && stale >= cfg.patience) break;
            }
        } else if (cfg.verbose) {
            std::fprintf(stderr, "epoch %d train_loss=%.5f lr=%g\n", epoch, epoch_loss, lr);
        }
    }

    hist.best_epoch = best_epoch;
    hist.best_val_sae = best_sae;
    if (n_val == 0) return net;
    return best_epoch >= 0 ? best : net;
}

Eigen::MatrixXf infer_batch(const Mlp& net, const Eigen::MatrixXf& X, int jobs) {
    if (X.rows() != net.input_dim())
        throw std::invalid_argument("infer_batch: feature dimension mismatch");
    constexpr Eigen::Index kBlock = 512;
    const Eigen::Index n = X.cols();
    Eigen::MatrixXf out(net.output_dim(), n);
    const std::size_t blocks = static_cast<std::size_t>((n + kBlock - 1) / kBlock);
    parallel_for(blocks, jobs, [&](std::size_t blk) {
        Eigen::Index start = static_cast<Eigen::Index>(blk) * kBlock;
        Eigen::Index len = std::min(kBlock, n - start);
        out.middleCols(start, len) = net.forward(X.middleCols(start, len));
    });
    return out;
}

namespace {

constexpr char kModelMagic[8] = {'Q', 'S', 'M', 'L', 'P', 'B', 'I', 'N'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void write_pod(std::ofstream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("model file: truncated");
    return v;
}

}  // namespace

void save_model(const Mlp& net, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_model: cannot open " + path.string());
    os.write(kModelMagic, sizeof(kModelMagic));
    write_pod(os, kModelVersion);
    write_pod(os, static_cast<std::uint32_t>(net.input_dim()));
    write_pod(os, static_cast<std::uint32_t>(net.layer_count()));
    for (const auto& w : net.W) write_pod(os, static_cast<std::uint32_t>(w.rows()));
    for (std::size_t k = 0; k < net.W.size(); ++k) {
        // Row-major on disk.
        for (Eigen::Index r = 0; r < net.W[k].rows(); ++r)
            for (Eigen::Index c = 0; c < net.W[k].cols(); ++c) write_pod(os, net.W[k](r, c));
        for (Eigen::Index r = 0; r < net.b[k].size(); ++r) write_pod(os, net.b[k][r]);
    }
    os.flush();
    if (!os) throw std::runtime_error("save_model: write failure on " + path.string());
}

Mlp load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_model: cannot open " + path.string());
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
        throw std::runtime_error("load_model: bad magic in " + path.string());
    auto version = read_pod<std::uint32_t>(is);
    if (version != kModelVersion)
        throw std::runtime_error("load_model: unsupported schema version");
    auto input_dim = read_pod<std::uint32_t>(is);
    auto layers = read_pod<std::uint32_t>(is);
    if (layers == 0 || layers > 64) throw std::runtime_error("load_model: implausible layer count");
    std::vector<std::uint32_t> widths(layers);
    for (auto& w : widths) w = read_pod<std::uint32_t>(is);
    Mlp net;
    std::uint32_t in = input_dim;
    for (std::uint32_t k = 0; k < layers; ++k) {
        Eigen::MatrixXf w(widths[k], in);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = read_pod<float>(is);
        Eigen::VectorXf bias(widths[k]);
        for (Eigen::Index r = 0; r < bias.size(); ++r) bias[r] = read_pod<float>(is);
        net.W.push_back(std::move(w));
        net.b.push_back(std::move(bias));
        in = widths[k];
    }
    return net;
}

std::vector<SweepPoint> moment_sweep(
    const std::function<std::pair<Dataset, Dataset>(int)>& build_for_n,
    std::span<const int> n_values, const TrainConfig& cfg) {
    std::vector<SweepPoint> out;
    out.reserve(n_values.size());
    for (int n : n_values) {
        auto [train_set, test_set] = build_for_n(n);
        TrainConfig c = cfg;
        c.n_moments = n;
        Mlp net = train(train_set, c);
        Eigen::MatrixXf pred = infer_batch(net, test_set.X, 1);
        out.push_back(SweepPoint{n, sae_batch(test_set.Y, pred)});
    }
    return out;
}

}  // namespace qsteady
