#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qsteady/metrics.hpp"
#include "qsteady/ph_sampler.hpp"
#include "qsteady/simqueue.hpp"

namespace qsteady {

struct GenConfig {
    PhSamplerConfig ph;
    double rho_min = 0.01;  // the prose also mentions 0.001; kept configurable
    double rho_max = 0.95;
    double phi = 0.01;      // minimum service rate per heterogeneous server
};

// A sampled queue instance plus the knobs that produced it.
struct SpecDraw {
    QueueSpec spec;
    double target_rho = 0.0;  // aggregate utilization the scaling aimed for
    double scv_arrival = 0.0;
    std::vector<double> scv_services;
    std::string family;
    std::uint64_t seed = 0;
};

// GI/GI/c: unit-mean PH arrival and service, c ~ U{1..10}, rho ~ U[rho_min,
// rho_max], service scaled so lambda * E[S] / c == rho.
SpecDraw gen_ggc_spec(std::uint64_t seed, const GenConfig& cfg = {});

// GI/GI_i/2: aggregate rate mu with 1/mu ~ U[rho_min, rho_max], split
// mu1 ~ U(phi, mu - phi), mu2 = mu - mu1; service blocks ordered by
// descending rate.
SpecDraw gen_gg2_spec(std::uint64_t seed, const GenConfig& cfg = {});

// Scales a unit-mean service distribution so a c-server queue with arrival
// rate lambda runs at utilization rho.
Dist scale_service_for_rho(const Dist& unit_service, double lambda, int c, double rho);

// Log of the first n moments of arrival and service distributions; the
// homogeneous system appends raw c (2n+1 features), the heterogeneous one
// concatenates the two service blocks in canonical order (3n features).
std::vector<double> preprocess(const QueueSpec& spec, int n = 4);

struct InstanceMeta {
    std::uint64_t seed = 0;
    std::string family;
    double target_rho = 0.0;
    double measured_rho = 0.0;
    double scv_arrival = 0.0;
    std::vector<double> scv_services;
    int c = 1;
    int n_moments = 4;
    double tail_mass = 0.0;
    bool flagged = false;  // tail_mass > delta
};

struct LabeledInstance {
    std::vector<double> features;
    std::vector<double> label;
    InstanceMeta meta;
};

inline constexpr double kTailDelta = 1e-3;

// Simulates the instance and assembles features, the truncated label and
// provenance metadata. Instances whose truncated tail exceeds delta are
// flagged, not rejected.
LabeledInstance label(const SpecDraw& draw, const SimConfig& cfg, int n = 4,
                      IdleRule idle_rule = IdleRule::Random);

// The external test grid: parametric arrival/service families crossed with
// server counts (homogeneous) and the utilization grid {0.01, 0.06, .., 0.96}.
std::vector<SpecDraw> build_testset2(SystemKind kind);

struct Dataset {
    SystemKind system = SystemKind::Ggc;
    int n_moments = 4;
    int l = 500;
    Eigen::MatrixXf X;  // n_features x N
    Eigen::MatrixXf Y;  // l x N
    std::vector<InstanceMeta> meta;

    int rows() const { return static_cast<int>(X.cols()); }
    int n_features() const { return static_cast<int>(X.rows()); }
};

struct DatagenOptions {
    GenConfig gen;
    IdleRule idle_rule = IdleRule::Random;
    int n_moments = 4;
    bool augment_swap = false;  // heterogeneous only: also emit swapped ordering
    int jobs = 0;
};

// Streams `count` labeled instances to a JSON-lines file (header line first).
// Row seeds derive from (master_seed, row index); an existing partial file
// with a matching header is resumed. Returns the number of rows written in
// this call.
std::size_t generate_dataset(SystemKind kind, std::size_t count, const SimConfig& sim_cfg,
                             std::uint64_t master_seed, const std::filesystem::path& out,
                             const DatagenOptions& opts = {});

Dataset load_dataset(const std::filesystem::path& path);

// In-memory assembly used by tests and sweeps.
Dataset dataset_from_instances(SystemKind kind, const std::vector<LabeledInstance>& rows,
                               int n_moments, int l);

// Deterministic row split for train/holdout experiments.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double holdout_fraction,
                                          std::uint64_t seed);

nlohmann::json instance_to_json(const LabeledInstance& inst);
LabeledInstance instance_from_json(const nlohmann::json& j);

}  // namespace qsteady
