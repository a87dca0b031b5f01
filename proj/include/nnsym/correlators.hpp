#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nnsym/ensembles.hpp"
#include "nnsym/linalg.hpp"
#include "nnsym/rng.hpp"

namespace nnsym {

/// Fixed evaluation points x_1..x_m, all of dimension d.
struct InputSet {
    std::size_t dim = 0;
    std::vector<std::vector<double>> points;

    void validate() const;
    std::size_t count() const { return points.size(); }
};

/// One tensor slot of an n-point function: which input point it evaluates,
/// and whether the output is conjugated (complex ensembles only).
struct Slot {
    std::size_t point = 0;
    bool conjugate = false;
};

/// Monte-Carlo estimate of G^(n): elementwise mean and standard error over
/// independent network draws, plus the provenance needed to reproduce it.
template <typename T>
struct CorrelatorTensor {
    std::vector<Slot> slots;
    DenseTensor<T> mean;
    DenseTensor<double> std_error;
    std::size_t sample_count = 0;
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    int workers = 1;

    std::size_t order() const { return slots.size(); }
};

/// 2-pt function over an input set, per-component averaged: symmetric m x m.
struct Kernel {
    InputSet inputs;
    RMatrix values;
    RMatrix std_error;
    std::size_t sample_count = 0;
};

CorrelatorTensor<double> estimate_correlator(const ArchitectureSpec& spec,
                                             const InputSet& inputs,
                                             std::span<const Slot> slots, std::size_t samples,
                                             RngStream rng, int workers = 1,
                                             MetropolisOptions mcmc = {});

CorrelatorTensor<cplx> estimate_correlator_complex(const ArchitectureSpec& spec,
                                                   const InputSet& inputs,
                                                   std::span<const Slot> slots,
                                                   std::size_t samples, RngStream rng,
                                                   int workers = 1, MetropolisOptions mcmc = {});

Kernel estimate_kernel(const ArchitectureSpec& spec, const InputSet& inputs,
                       std::size_t samples, RngStream rng, int workers = 1,
                       MetropolisOptions mcmc = {});

// ---------------------------------------------------------------------------
// GP Wick oracle
// ---------------------------------------------------------------------------

/// All pair partitions of {0..n-1}, built by recursively pairing the lowest
/// unpaired element; (n-1)!! of them for even n.
std::vector<std::vector<std::pair<std::size_t, std::size_t>>> pair_partitions(std::size_t n);

/// Gaussian even-point tensor: sum over pair partitions of products
/// delta_{i_a i_b} K(x_a, x_b). slot_points maps tensor slots to kernel rows.
RTensor wick_correlator(const Kernel& kernel, std::span<const std::size_t> slot_points,
                        std::size_t out_dim);

struct WickTensor {
    RTensor mean;
    RTensor std_error;  // first-order propagation of the kernel's stderr
};
WickTensor wick_correlator_with_error(const Kernel& kernel,
                                      std::span<const std::size_t> slot_points,
                                      std::size_t out_dim);

// ---------------------------------------------------------------------------
// Connected correlators (cumulant subtraction, a reporting option)
// ---------------------------------------------------------------------------

/// Elementwise lookup of a lower-order moment: component i at point_a times
/// component j at point_b expectation.
using TwoPointLookup =
    std::function<double(std::size_t point_a, std::size_t i, std::size_t point_b,
                         std::size_t j)>;
using OnePointLookup = std::function<double(std::size_t point, std::size_t i)>;

/// kappa2 = G2 - G1 G1.
RTensor connected_2pt(const CorrelatorTensor<double>& g2, const OnePointLookup& one_pt);

/// kappa4 for zero-mean ensembles: G4 minus the three 2-pt pairings.
RTensor connected_4pt(const CorrelatorTensor<double>& g4, const TwoPointLookup& two_pt);

// ---------------------------------------------------------------------------
// GP limit check
// ---------------------------------------------------------------------------

struct GpLimitRow {
    std::size_t width = 0;
    double max_sigma = 0.0;        // worst elementwise |G4 - Wick| / combined stderr
    double frac_within_4sigma = 0.0;
    std::size_t elements = 0;
};

struct GpLimitReport {
    std::vector<GpLimitRow> rows;  // in the width order given
    bool max_sigma_decreasing = false;
};

/// Compares the measured 4-pt function against the Wick tensor built from the
/// measured kernel, per width.
GpLimitReport gp_limit_check(const std::function<ArchitectureSpec(std::size_t)>& family,
                             const InputSet& inputs, std::span<const std::size_t> widths,
                             std::size_t kernel_samples, std::size_t fourpt_samples,
                             RngStream rng, int workers = 1);

// ---------------------------------------------------------------------------
// Perturbative non-Gaussian 2-pt function
// ---------------------------------------------------------------------------

struct PerturbativeKernel {
    Kernel kernel;                      // output-layer 2-pt per diagonal component
    double coefficient = 0.0;           // multiplier of N * K_hidden, i.e. c(lambda)
    double order_lambda_coefficient = 0.0;  // d c / d lambda at lambda = 0
    bool large_lambda_warning = false;
};

/// O(lambda)-corrected 2-pt function of f_i = theta_ij g_j with the output
/// weights theta drawn from the quartic-invariant density. Closed-form
/// Gaussian moments are substituted into the moment-ratio expansion; the
/// excluded index coincidences are handled by exact combinatorial counts
/// (all listed index pairs mutually distinct).
PerturbativeKernel perturbative_ngp_2pt(double sigma, double lambda, const Kernel& hidden,
                                        std::size_t width, std::size_t out_dim);

// ---------------------------------------------------------------------------
// Ward identity sum
// ---------------------------------------------------------------------------

/// MC estimate of sum_i E[f(x_1) ... (T f)(x_i) ... f(x_n)] with one slot per
/// input point; zero within stderr for densities invariant under exp(t T).
CorrelatorTensor<double> ward_identity_sum(const ArchitectureSpec& spec,
                                           const InputSet& inputs, const RMatrix& generator,
                                           std::size_t samples, RngStream rng,
                                           int workers = 1);

// ---------------------------------------------------------------------------
// Synthetic exact-GP draws (oracle ensemble for tests and the CLI)
// ---------------------------------------------------------------------------

/// Draws f_i(x_a) from the zero-mean GP with covariance delta_ij K(x_a,x_b);
/// returns a D x m matrix per draw.
class GpSampler {
public:
    GpSampler(const Kernel& kernel, std::size_t out_dim, RngStream rng);
    RMatrix next();

private:
    RMatrix chol_;
    std::size_t out_dim_;
    RngStream rng_;
};

/// Correlator of exact GP draws with slots as in estimate_correlator.
CorrelatorTensor<double> estimate_gp_correlator(const Kernel& kernel, std::size_t out_dim,
                                                std::span<const Slot> slots,
                                                std::size_t samples, RngStream rng);

}  // namespace nnsym
