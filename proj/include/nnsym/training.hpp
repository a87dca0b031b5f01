#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nnsym/correlators.hpp"
#include "nnsym/ensembles.hpp"
#include "nnsym/rng.hpp"
#include "nnsym/symmetry.hpp"

namespace nnsym {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct Dataset {
    std::size_t feature_dim = 0;
    std::vector<double> features;       // size() x feature_dim, row-major
    std::vector<std::uint8_t> labels;   // class ids

    std::size_t size() const { return labels.size(); }
    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * feature_dim, feature_dim};
    }
    void validate() const;
};

struct BlobParams {
    std::size_t classes = 10;
    std::size_t dim = 64;
    double center_lo = 0.35;
    double center_hi = 0.85;
    double noise = 0.25;
    std::uint64_t seed = 7;
};

/// Gaussian-blob classification data, features clamped to [0,1]. Class
/// centers depend only on params.seed, so train and test splits share them.
Dataset make_blobs(const BlobParams& params, std::size_t per_class, std::uint64_t sample_seed);

/// Two well-separated classes in the plane; linearly separable.
Dataset make_two_blobs(std::size_t per_class, std::uint64_t sample_seed);

/// Nearest-class-mean classifier accuracy (closed-form reference for blob
/// data with isotropic noise). Means fitted on `train`, scored on `test`.
double nearest_mean_accuracy(const Dataset& train, const Dataset& test);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class LabelEncoding { OneHot, OneCold };
enum class LossKind { Mse, SoInvariant };

struct TrainingConfig {
    std::size_t epochs = 2;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    LossKind loss = LossKind::Mse;
    LabelEncoding encoder = LabelEncoding::OneHot;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
};

struct TrainResult {
    NetworkDraw net;
    std::vector<EpochMetrics> metrics;
    double max_test_accuracy = 0.0;
};

/// Symmetry-breaking initialization: the first k rows of the final (linear,
/// no-bias) output weight get mean mu_w on top of their N(0, std) draw; the
/// density keeps SO(D-k) symmetry.
NetworkDraw breaking_init(const ArchitectureSpec& spec, std::size_t k, double mu_w,
                          RngStream& rng);

/// Plain minibatch SGD; the batch order is part of the contract (sequential,
/// shuffled per epoch from config.seed).
TrainResult sgd_train(NetworkDraw net, const Dataset& train, const Dataset& test,
                      const TrainingConfig& config);

/// Encoded target for class `label`: e_label (one-hot) or 1 - e_label.
std::vector<double> encode_label(std::uint8_t label, std::size_t classes, LabelEncoding enc);
/// argmax for one-hot, argmin for one-cold.
std::size_t decode_output(std::span<const double> out, LabelEncoding enc);

// ---------------------------------------------------------------------------
// Experiment harnesses (training grids)
// ---------------------------------------------------------------------------

struct TrainGridCell {
    std::size_t k = 0;
    double mu_w = 0.0;
    double mean_max_accuracy = 0.0;
    double stddev_accuracy = 0.0;
    std::vector<double> per_seed;
    // per (seed, epoch) metrics for the CSV emitters
    std::vector<std::vector<EpochMetrics>> per_seed_metrics;
    std::vector<std::uint64_t> seeds;
};

/// Trains the architecture from breaking_init(k, mu_w) for every grid cell
/// and seed; spec's final layer must be linear with no bias.
std::vector<TrainGridCell> train_grid(const ArchitectureSpec& spec, const Dataset& train,
                                      const Dataset& test, std::span<const std::size_t> k_grid,
                                      std::span<const double> mu_grid,
                                      std::span<const std::uint64_t> seeds,
                                      const TrainingConfig& config, int workers = 1);

/// One-cold encoding sweep at full symmetry breaking (k = D).
std::vector<TrainGridCell> one_cold_experiment(const ArchitectureSpec& spec,
                                               const Dataset& train, const Dataset& test,
                                               std::span<const double> mu_grid,
                                               std::span<const std::uint64_t> seeds,
                                               TrainingConfig config, int workers = 1);

/// Ensemble mean of ReLU hidden activations over draws and data rows; the
/// scale entering the predicted one-cold peak location.
double mean_hidden_activation(const ArchitectureSpec& spec, const Dataset& data,
                              std::size_t draws, std::size_t rows, RngStream rng);

// ---------------------------------------------------------------------------
// Neural tangent kernel
// ---------------------------------------------------------------------------

struct NTKTensor {
    RMatrix theta;  // D x D at the given input pair
    bool nondifferentiable = false;  // t-layer hit an integer input
};

/// Jacobian inner product over all trainable parameters, by backprop.
NTKTensor empirical_ntk(const NetworkDraw& net, std::span<const double> x,
                        std::span<const double> xp);

struct EnsembleNTK {
    RMatrix mean;
    RMatrix std_error;
    std::size_t sample_count = 0;
};

EnsembleNTK ensemble_ntk(const ArchitectureSpec& spec, std::span<const double> x,
                         std::span<const double> xp, std::size_t samples, RngStream rng,
                         int workers = 1);

/// Full Jacobian of outputs w.r.t. every trainable parameter (row per output
/// component); exposed for the finite-difference checks.
RMatrix output_jacobian(const NetworkDraw& net, std::span<const double> x);

// ---------------------------------------------------------------------------
// Symmetry-preserving training check
// ---------------------------------------------------------------------------

struct FlowCheckConfig {
    std::size_t steps = 100;
    double learning_rate = 1e-3;
    std::size_t ensemble_size = 400;
    std::size_t experiments = 6;
    std::size_t elements = 200;
    std::uint64_t seed = 1;
    int workers = 1;
};

struct FlowCheckReport {
    DeviationReport invariant_1pt;
    DeviationReport invariant_2pt;
    DeviationReport mse_1pt;
    double invariant_loss_final = 0.0;
    double mse_loss_final = 0.0;
};

/// Correlators of a trained ensemble: mean/stderr across the member networks.
CorrelatorTensor<double> ensemble_correlator(std::span<const NetworkDraw> members,
                                             const InputSet& inputs,
                                             std::span<const Slot> slots);

/// Trains ensembles under the quadratic SO-invariant loss and under one-hot
/// MSE, then checks output-layer 1-pt/2-pt invariance of each evolved
/// ensemble. The invariant-loss flow keeps both; MSE breaks the 1-pt.
FlowCheckReport density_flow_check(const ArchitectureSpec& spec, const Dataset& data,
                                   const InputSet& eval_inputs, const FlowCheckConfig& config);

}  // namespace nnsym
