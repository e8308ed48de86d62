#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qsteady/datagen.hpp"
#include "qsteady/rng.hpp"

namespace qsteady {

inline const std::vector<int> kDefaultHiddenWidths = {50, 70, 200, 350, 200, 350, 600};
inline constexpr int kDefaultOutputDim = 500;

// Fully-connected ReLU stack with a softmax head. Scalar type is a template
// parameter: training and inference run in float, numerical tests
// instantiate double.
template <typename S>
struct MlpT {
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

    std::vector<Mat> W;  // W[k]: width_k x width_{k-1}
    std::vector<Vec> b;

    int input_dim() const { return W.empty() ? 0 : static_cast<int>(W.front().cols()); }
    int output_dim() const { return W.empty() ? 0 : static_cast<int>(W.back().rows()); }
    std::size_t layer_count() const { return W.size(); }
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t k = 0; k < W.size(); ++k)
            n += static_cast<std::size_t>(W[k].size()) + static_cast<std::size_t>(b[k].size());
        return n;
    }

    // Fan-in-scaled uniform initialization.
    static MlpT init(int input_dim, std::span<const int> hidden, int output_dim,
                     std::uint64_t seed) {
        if (input_dim < 1 || output_dim < 1)
            throw std::invalid_argument("MlpT::init: positive dimensions required");
        MlpT net;
        Rng rng(seed);
        int in = input_dim;
        auto add_layer = [&](int out) {
            S bound = static_cast<S>(1.0 / std::sqrt(static_cast<double>(in)));
            Mat w(out, in);
            Vec bias(out);
            for (Eigen::Index j = 0; j < w.size(); ++j)
                w.data()[j] = static_cast<S>(rng.uniform(-1.0, 1.0)) * bound;
            for (Eigen::Index j = 0; j < bias.size(); ++j)
                bias[j] = static_cast<S>(rng.uniform(-1.0, 1.0)) * bound;
            net.W.push_back(std::move(w));
            net.b.push_back(std::move(bias));
            in = out;
        };
        for (int h : hidden) add_layer(h);
        add_layer(output_dim);
        return net;
    }

    // Softmax over one logit column, accumulated in double.
    static void softmax_col(const S* logits, S* out, int n) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(logits[j]));
        double sum = 0.0;
        std::vector<double> e(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) {
            e[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(logits[j]) - mx);
            sum += e[static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < n; ++j)
            out[j] = static_cast<S>(e[static_cast<std::size_t>(j)] / sum);
    }

    // acts[0] = X, acts[k] = post-ReLU of layer k, acts[L] = softmax output.
    std::vector<Mat> forward_cached(const Mat& X) const {
        if (X.rows() != input_dim())
            throw std::invalid_argument("MlpT::forward: input dimension mismatch");
        const std::size_t L = W.size();
        std::vector<Mat> acts(L + 1);
        acts[0] = X;
        for (std::size_t k = 0; k + 1 < L; ++k)
            acts[k + 1] = ((W[k] * acts[k]).colwise() + b[k]).cwiseMax(S(0));
        Mat logits = (W[L - 1] * acts[L - 1]).colwise() + b[L - 1];
        Mat out(logits.rows(), logits.cols());
        for (Eigen::Index i = 0; i < logits.cols(); ++i)
            softmax_col(logits.col(i).data(), out.col(i).data(),
                        static_cast<int>(logits.rows()));
        acts[L] = std::move(out);
        return acts;
    }

    Mat forward(const Mat& X) const { return forward_cached(X).back(); }

    Vec forward_one(const Vec& x) const {
        Mat X = x;
        return forward(X).col(0);
    }
};

using Mlp = MlpT<float>;

// Batch loss: mean row L1 error plus mean row max error.
template <typename S>
double loss_eq1(const typename MlpT<S>::Mat& Y, const typename MlpT<S>::Mat& Yhat) {
    if (Y.rows() != Yhat.rows() || Y.cols() != Yhat.cols())
        throw std::invalid_argument("loss_eq1: shape mismatch");
    const Eigen::Index B = Y.cols();
    if (B == 0) return 0.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
        double l1 = 0.0, mx = 0.0;
        for (Eigen::Index j = 0; j < Y.rows(); ++j) {
            double d = std::abs(static_cast<double>(Y(j, i)) - static_cast<double>(Yhat(j, i)));
            l1 += d;
            mx = std::max(mx, d);
        }
        total += l1 + mx;
    }
    return total / static_cast<double>(B);
}

template <typename S>
struct MlpGrads {
    std::vector<typename MlpT<S>::Mat> W;
    std::vector<typename MlpT<S>::Vec> b;
};

// Loss and analytic gradient for one batch. The max-term subgradient uses
// the first maximal index of each row.
template <typename S>
std::pair<double, MlpGrads<S>> loss_and_grad(const MlpT<S>& net,
                                             const typename MlpT<S>::Mat& X,
                                             const typename MlpT<S>::Mat& Y) {
    using Mat = typename MlpT<S>::Mat;
    const std::size_t L = net.W.size();
    auto acts = net.forward_cached(X);
    const Mat& out = acts[L];
    const Eigen::Index B = X.cols();
    const Eigen::Index l = out.rows();
    double loss = loss_eq1<S>(Y, out);

    // dL/dYhat.
    Mat g(l, B);
    const S invB = static_cast<S>(1.0 / static_cast<double>(B));
    for (Eigen::Index i = 0; i < B; ++i) {
        double best = -1.0;
        Eigen::Index best_j = 0;
        for (Eigen::Index j = 0; j < l; ++j) {
            double diff = static_cast<double>(Y(j, i)) - static_cast<double>(out(j, i));
            double mag = std::abs(diff);
            S sign = diff > 0.0 ? S(-1) : (diff < 0.0 ? S(1) : S(0));
            g(j, i) = invB * sign;
            if (mag > best) {
                best = mag;
                best_j = j;
            }
        }
        double diff = static_cast<double>(Y(best_j, i)) - static_cast<double>(out(best_j, i));
        S sign = diff > 0.0 ? S(-1) : (diff < 0.0 ? S(1) : S(0));
        g(best_j, i) += invB * sign;
    }

    // Softmax backward: dz = y .* (g - <g, y>).
    Mat dz(l, B);
    for (Eigen::Index i = 0; i < B; ++i) {
        double dot = 0.0;
        for (Eigen::Index j = 0; j < l; ++j)
            dot += static_cast<double>(g(j, i)) * static_cast<double>(out(j, i));
        for (Eigen::Index j = 0; j < l; ++j)
            dz(j, i) = out(j, i) * (g(j, i) - static_cast<S>(dot));
    }

    MlpGrads<S> grads;
    grads.W.resize(L);
    grads.b.resize(L);
    for (std::size_t k = L; k-- > 0;) {
        grads.W[k].noalias() = dz * acts[k].transpose();
        grads.b[k] = dz.rowwise().sum();
        if (k > 0) {
            Mat dh = net.W[k].transpose() * dz;
            dz = dh.cwiseProduct(
                (acts[k].array() > S(0)).template cast<S>().matrix());
        }
    }
    return {loss, std::move(grads)};
}

struct TrainConfig {
    int batch = 256;
    double lr = 1e-3;
    int epochs = 100;
    int n_moments = 4;
    double val_fraction = 0.1;
    std::uint64_t seed = 1;
    int patience = 10;      // early stop on validation SAE
    int lr_patience = 5;    // halve the step after this many stale epochs
    double lr_decay = 0.5;
    double min_lr = 1e-5;
    std::vector<int> hidden_widths = kDefaultHiddenWidths;
    bool verbose = false;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> val_sae;
    int best_epoch = -1;
    double best_val_sae = 0.0;
};

struct TrainDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Minibatch Adam on the Eq.-style loss; returns the best-on-validation
// checkpoint. Throws TrainDivergence with a diagnostic on non-finite loss.
Mlp train(const Dataset& data, const TrainConfig& cfg, TrainHistory* history = nullptr);

// Vectorized forward over feature columns; processed in fixed-size column
// blocks so results do not depend on the worker count.
Eigen::MatrixXf infer_batch(const Mlp& net, const Eigen::MatrixXf& X, int jobs = 0);

// Mean SAE of predictions against labels (both column-major batches).
double sae_batch(const Eigen::MatrixXf& Y, const Eigen::MatrixXf& Yhat);

// Versioned binary model file: magic, schema version, dimensions, then
// float32 weights and biases per layer in declaration order.
void save_model(const Mlp& net, const std::filesystem::path& path);
Mlp load_model(const std::filesystem::path& path);

struct SweepPoint {
    int n = 0;
    double test_sae = 0.0;
};

// Trains one model per requested moment count on datasets built over the
// same underlying specs and reports held-out SAE per n.
std::vector<SweepPoint> moment_sweep(
    const std::function<std::pair<Dataset, Dataset>(int)>& build_for_n,
    std::span<const int> n_values, const TrainConfig& cfg);

}  // namespace qsteady
