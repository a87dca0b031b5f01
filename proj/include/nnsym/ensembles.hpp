#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "nnsym/linalg.hpp"
#include "nnsym/rng.hpp"

namespace nnsym {

// ---------------------------------------------------------------------------
// Parameter priors
// ---------------------------------------------------------------------------

struct GaussianPrior {
    double mean = 0.0;
    double stddev = 1.0;
};

/// Uniform on the circle of circumference 1; draws live in [0, 1).
struct UniformCirclePrior {};

/// Density ~ exp(-Tr(W^T W)/(2 sigma^2) - lambda (Tr(W^T W))^2.
/// For lambda > 0 the quartic term couples all entries of the tensor, so
/// draws come from a Metropolis chain rather than independent sampling.
struct QuarticInvariantPrior {
    double stddev = 1.0;
    double lambda = 0.0;
};

struct ParameterPrior {
    std::variant<GaussianPrior, UniformCirclePrior, QuarticInvariantPrior> kind;
    std::vector<std::size_t> shape;

    bool zero_mean() const;
    void validate() const;
};

// ---------------------------------------------------------------------------
// Layers and architectures
// ---------------------------------------------------------------------------

struct LinearLayer {
    std::size_t in = 0, out = 0;
    ParameterPrior weight_prior;               // shape {out, in}
    std::optional<ParameterPrior> bias_prior;  // shape {out}
    bool deterministic_weight = false;
    std::optional<RMatrix> fixed_weight;  // required when deterministic_weight
    double scale = 1.0;                   // output multiplier, e.g. 1/sqrt(N)
};

/// x -> (Wx + b) mod 1 with deterministic W and b ~ U(S^1); output in [0,1)^out.
struct TLayer {
    std::size_t in = 0, out = 0;
    RMatrix weight;
};

enum class Activation { Relu, ExpNormalized };

struct ActivationLayer {
    Activation kind = Activation::Relu;
    // Normalization constants for exp-normalized: z -> exp(z)/sqrt(exp(2(sb^2 + sw^2/d))).
    double sigma_b = 0.0;
    double sigma_w = 0.0;
    std::size_t d = 0;
};

/// Complex-valued linear output layer; Re W and Im W each gaussian(0, weight_std).
struct ComplexLinearLayer {
    std::size_t in = 0, out = 0;
    double weight_std = 1.0;
    std::optional<double> bias_std;
};

using LayerSpec = std::variant<LinearLayer, TLayer, ActivationLayer, ComplexLinearLayer>;

enum class FieldType { Real, Complex };

struct ArchitectureSpec {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::vector<LayerSpec> layers;
    FieldType field = FieldType::Real;

    /// Checks dimension composition, final out-dim, t-layer/activation
    /// constraints and complex-layer placement. Throws std::invalid_argument.
    void validate() const;
};

struct LayerParams {
    RMatrix weight;
    std::vector<double> bias;
    CMatrix cweight;
    std::vector<cplx> cbias;
};

struct NetworkDraw {
    const ArchitectureSpec* spec = nullptr;
    std::vector<LayerParams> layers;
};

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

struct MetropolisOptions {
    std::size_t burn_in = 10000;
    std::size_t thinning = 10;
    double target_acceptance = 0.4;
};

struct MetropolisStats {
    double acceptance_rate = 0.0;
    double step_scale = 0.0;
    std::size_t proposals = 0;
};

/// One quartic-invariant Metropolis chain over a flattened tensor.
/// The proposal is an isotropic Gaussian step; its scale is adapted toward
/// the target acceptance during burn-in, then frozen.
class QuarticChain {
public:
    QuarticChain(const QuarticInvariantPrior& prior, std::size_t entries, RngStream rng,
                 MetropolisOptions opts = {});

    /// Advance `thinning` accepted-or-rejected proposals and return the state.
    std::span<const double> next();
    MetropolisStats stats() const;

private:
    void step();

    QuarticInvariantPrior prior_;
    MetropolisOptions opts_;
    RngStream rng_;
    std::vector<double> state_;
    std::vector<double> proposal_;
    double trace_sq_ = 0.0;  // Tr(W^T W) of current state
    double step_scale_ = 0.0;
    std::size_t post_proposals_ = 0, post_accepted_ = 0;
    std::size_t accepted_since_adapt_ = 0, proposals_since_adapt_ = 0;
    bool frozen_ = false;
};

/// Draws per the quartic density; returns `count` tensors of the given shape
/// plus chain statistics.
struct MetropolisSample {
    std::vector<std::vector<double>> draws;
    MetropolisStats stats;
};
MetropolisSample metropolis_sample(const QuarticInvariantPrior& prior,
                                   std::span<const std::size_t> shape, std::size_t count,
                                   RngStream rng, MetropolisOptions opts = {});

/// Repeated-draw sampler bound to one architecture; reuses buffers and keeps
/// Metropolis chains warm across draws. One instance per worker.
class NetworkSampler {
public:
    NetworkSampler(const ArchitectureSpec& spec, RngStream rng, MetropolisOptions opts = {});

    const NetworkDraw& next();
    const NetworkDraw& current() const { return draw_; }

private:
    const ArchitectureSpec* spec_;
    RngStream rng_;
    MetropolisOptions opts_;
    NetworkDraw draw_;
    std::vector<std::optional<QuarticChain>> weight_chains_;
    std::vector<std::optional<QuarticChain>> bias_chains_;
};

/// Single independent draw of every parameter tensor from its prior.
NetworkDraw sample_network(const ArchitectureSpec& spec, RngStream& rng,
                           MetropolisOptions opts = {});

// ---------------------------------------------------------------------------
// Forward evaluation
// ---------------------------------------------------------------------------

/// Scratch buffers for repeated forward passes.
struct ForwardWorkspace {
    std::vector<double> a, b;
};

std::vector<double> forward(const NetworkDraw& net, std::span<const double> x);
void forward(const NetworkDraw& net, std::span<const double> x, ForwardWorkspace& ws,
             std::vector<double>& out);

std::vector<cplx> forward_complex(const NetworkDraw& net, std::span<const double> x);
void forward_complex(const NetworkDraw& net, std::span<const double> x, ForwardWorkspace& ws,
                     std::vector<cplx>& out);

/// Hidden post-activation feeding the final layer (the g(x) of a linear
/// output network); used by mean-field predictions in the experiments.
std::vector<double> hidden_activation(const NetworkDraw& net, std::span<const double> x);

// ---------------------------------------------------------------------------
// Architecture presets used across experiments and tests
// ---------------------------------------------------------------------------

/// Single hidden layer with the exp-normalized activation; Gaussian GP kernel
/// in the wide limit. W0 std = sigma_w/sqrt(d), W1 std = sigma_w/sqrt(n).
ArchitectureSpec gauss_net(std::size_t d, std::size_t n, std::size_t out_dim, double sigma_w,
                           double sigma_b);

/// Single hidden ReLU layer, no biases, linear output.
/// w0_std/w1_std are the full standard deviations (any width scaling baked in
/// by the caller), output scale multiplies the final linear map.
ArchitectureSpec relu_net(std::size_t d, std::size_t n, std::size_t out_dim, double w0_std,
                          double w1_std, double output_scale = 1.0);

/// Bare linear map, weight entries N(mean, stddev), no bias.
ArchitectureSpec linear_net(std::size_t d, std::size_t out_dim, double mean, double stddev);

/// T-layer (fixed weight) feeding a ReLU stack; translation-invariant density.
ArchitectureSpec t_layer_net(const RMatrix& t_weight, std::size_t n, std::size_t out_dim,
                             double w_std, double v_std);

/// Real ReLU hidden stack with a complex linear output layer.
ArchitectureSpec complex_output_net(std::size_t d, std::size_t n, std::size_t out_dim,
                                    double w0_std, double wout_std);

}  // namespace nnsym
