#pragma once

#include <span>
#include <string>
#include <vector>

#include "nnsym/correlators.hpp"
#include "nnsym/linalg.hpp"
#include "nnsym/rng.hpp"

namespace nnsym {

enum class GroupName { SO, SU, Translation };
enum class ActionSide { Input, Output };

struct GroupSpec {
    GroupName name = GroupName::SO;
    std::size_t dim = 0;
    ActionSide side = ActionSide::Output;
};

/// A concrete group element: orthogonal matrix, unitary matrix, or shift
/// vector, plus the measured generation error of the matrix.
struct GroupElement {
    GroupName group = GroupName::SO;
    ActionSide side = ActionSide::Output;
    RMatrix rotation;           // SO
    CMatrix unitary;            // SU
    std::vector<double> shift;  // translation
    double residual = 0.0;       // max |M^T M - I|
    double offdiag_error = 0.0;  // mean |off-diagonal of M^T M|

    static GroupElement identity(const GroupSpec& spec);
};

/// Basis of so(D): D(D-1)/2 skew-symmetric matrices, one per rotation plane
/// (p,q) with p<q, each with -1 at (p,q) and +1 at (q,p). Plane order matches
/// the standard so(3) basis at D=3: {2,3}, {1,3}, {1,2}.
std::vector<RMatrix> so_generators(std::size_t dim);

/// Hermitian traceless basis of su(D) (generalized Gell-Mann matrices),
/// D^2 - 1 of them.
std::vector<CMatrix> su_generators(std::size_t dim);

GroupElement so_element(std::size_t dim, std::span<const double> alphas,
                        ActionSide side = ActionSide::Output);
GroupElement su_element(std::size_t dim, std::span<const double> alphas,
                        ActionSide side = ActionSide::Output);
GroupElement translation_element(std::vector<double> shift);

/// SO/SU: exponential of a random generator combination with U(0,1)
/// coefficients. Translation: standard normal shift entries.
GroupElement random_group_element(const GroupSpec& spec, RngStream& rng);

/// Output-side action on every tensor slot; conjugated slots contract with
/// the conjugate matrix. stderr is propagated through the contraction,
/// including the element generation error.
CorrelatorTensor<double> transform_correlator(const CorrelatorTensor<double>& g,
                                              const GroupElement& elem);
CorrelatorTensor<cplx> transform_correlator(const CorrelatorTensor<cplx>& g,
                                            const GroupElement& elem);

/// Input-side action: rotate or translate every point.
InputSet transform_inputs(const InputSet& inputs, const GroupElement& elem);

struct DeviationOptions {
    double band_multiplier = 1.0;  // pass if mean deviation <= multiplier * delta_M
};

/// Elementwise deviation statistics of transformed vs raw correlators, and
/// the propagated error bound they are measured against.
struct DeviationReport {
    std::size_t element_count = 0;     // group elements
    std::size_t experiment_count = 0;  // independent correlator estimates
    std::size_t tensor_order = 0;
    double mu_m = 0.0;      // elementwise mean deviation, averaged over entries
    double sigma_m = 0.0;   // elementwise std across experiments, averaged
    double delta_m = 0.0;   // sqrt(delta_g_prime^2 + delta_g^2)
    double delta_g = 0.0;
    double delta_g_prime = 0.0;
    double delta_r = 0.0;   // mean off-diagonal error of the generated elements
    double pass_fraction = 0.0;
    double band_multiplier = 1.0;
    RTensor elementwise_mean;  // mean deviation per tensor entry
    std::string formula;       // which propagation bookkeeping produced delta_m
};

DeviationReport deviation_report(std::span<const CorrelatorTensor<double>> experiments,
                                 const GroupSpec& group, std::size_t elements, RngStream rng,
                                 DeviationOptions opts = {});
DeviationReport deviation_report(std::span<const CorrelatorTensor<cplx>> experiments,
                                 const GroupSpec& group, std::size_t elements, RngStream rng,
                                 DeviationOptions opts = {});

}  // namespace nnsym
