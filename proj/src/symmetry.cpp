#include "nnsym/symmetry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nnsym {

namespace {

constexpr const char* kDeviationFormula =
    "delta_gp = mean_b mean_I sqrt( sum_t dR^2 * sum_q |contract(mean_G, R_b, slots != t)|^2 "
    "+ [contract(dG_elem^2, |R_b|^2, all slots)]_I ); delta_m = sqrt(delta_gp^2 + delta_g^2)";

template <typename T>
const Matrix<T>& element_matrix(const GroupElement& elem);

template <>
const Matrix<double>& element_matrix<double>(const GroupElement& elem) {
    if (elem.group != GroupName::SO)
        throw std::invalid_argument("transform: real tensors transform under SO elements");
    return elem.rotation;
}

template <>
const Matrix<cplx>& element_matrix<cplx>(const GroupElement& elem) {
    if (elem.group != GroupName::SU)
        throw std::invalid_argument("transform: complex tensors transform under SU elements");
    return elem.unitary;
}

// Slot matrix honoring slot conjugation: f-slot uses S, f†-slot uses conj(S)
// (so that G'..k.. = G..l.. S†_{lk}).
template <typename T>
Matrix<T> slot_matrix(const Matrix<T>& m, bool conjugate) {
    if constexpr (std::is_same_v<T, cplx>) {
        return conjugate ? m.conjugate() : m;
    } else {
        (void)conjugate;
        return m;
    }
}

template <typename T>
DenseTensor<T> transform_mean(const DenseTensor<T>& mean, std::span<const Slot> slots,
                              const Matrix<T>& m) {
    DenseTensor<T> out = mean;
    for (std::size_t t = 0; t < slots.size(); ++t)
        out = contract_index(out, slot_matrix(m, slots[t].conjugate), t);
    return out;
}

// Squared-magnitude matrix used to push elementwise variances through a
// contraction.
template <typename T>
RMatrix abs_squared(const Matrix<T>& m) {
    RMatrix q(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const double a = detail::abs_val(m(i, j));
            q(i, j) = a * a;
        }
    return q;
}

}  // namespace

GroupElement GroupElement::identity(const GroupSpec& spec) {
    GroupElement e;
    e.group = spec.name;
    e.side = spec.side;
    switch (spec.name) {
        case GroupName::SO:
            e.rotation = RMatrix::identity(spec.dim);
            break;
        case GroupName::SU:
            e.unitary = CMatrix::identity(spec.dim);
            break;
        case GroupName::Translation:
            e.shift.assign(spec.dim, 0.0);
            break;
    }
    return e;
}

std::vector<RMatrix> so_generators(std::size_t dim) {
    if (dim < 2) throw std::invalid_argument("so_generators: dimension must be >= 2");
    // Planes in descending (p,q) order; at D=3 this reproduces the standard
    // so(3) basis T1={2,3}, T2={1,3}, T3={1,2}.
    std::vector<RMatrix> gens;
    for (std::size_t p = dim - 1; p-- > 0;)
        for (std::size_t q = dim; q-- > p + 1;) {
            RMatrix t(dim, dim);
            t(p, q) = -1.0;
            t(q, p) = 1.0;
            gens.push_back(std::move(t));
        }
    return gens;
}

std::vector<CMatrix> su_generators(std::size_t dim) {
    if (dim < 2) throw std::invalid_argument("su_generators: dimension must be >= 2");
    std::vector<CMatrix> gens;
    for (std::size_t p = 0; p < dim; ++p)
        for (std::size_t q = p + 1; q < dim; ++q) {
            CMatrix sym(dim, dim);
            sym(p, q) = 1.0;
            sym(q, p) = 1.0;
            gens.push_back(std::move(sym));
            CMatrix asym(dim, dim);
            asym(p, q) = cplx(0.0, -1.0);
            asym(q, p) = cplx(0.0, 1.0);
            gens.push_back(std::move(asym));
        }
    for (std::size_t m = 1; m < dim; ++m) {
        CMatrix diag(dim, dim);
        const double norm = std::sqrt(2.0 / (static_cast<double>(m) * (m + 1)));
        for (std::size_t i = 0; i < m; ++i) diag(i, i) = norm;
        diag(m, m) = -norm * static_cast<double>(m);
        gens.push_back(std::move(diag));
    }
    return gens;
}

GroupElement so_element(std::size_t dim, std::span<const double> alphas, ActionSide side) {
    const auto gens = so_generators(dim);
    if (alphas.size() != gens.size())
        throw std::invalid_argument("so_element: expected " + std::to_string(gens.size()) +
                                    " coefficients");
    RMatrix a(dim, dim);
    for (std::size_t i = 0; i < gens.size(); ++i) {
        RMatrix scaled = gens[i];
        scaled *= alphas[i];
        a += scaled;
    }
    GroupElement e;
    e.group = GroupName::SO;
    e.side = side;
    e.rotation = expm(a);
    e.residual = orthogonality_residual(e.rotation);
    e.offdiag_error = mean_offdiagonal_error(e.rotation);
    return e;
}

GroupElement su_element(std::size_t dim, std::span<const double> alphas, ActionSide side) {
    const auto gens = su_generators(dim);
    if (alphas.size() != gens.size())
        throw std::invalid_argument("su_element: expected " + std::to_string(gens.size()) +
                                    " coefficients");
    CMatrix h(dim, dim);
    for (std::size_t i = 0; i < gens.size(); ++i) {
        CMatrix scaled = gens[i];
        scaled *= cplx(alphas[i], 0.0);
        h += scaled;
    }
    // exp(i H), H Hermitian traceless: unitary with det 1.
    CMatrix ih = h;
    ih *= cplx(0.0, 1.0);
    GroupElement e;
    e.group = GroupName::SU;
    e.side = side;
    e.unitary = expm(ih);
    e.residual = orthogonality_residual(e.unitary);
    e.offdiag_error = mean_offdiagonal_error(e.unitary);
    return e;
}

GroupElement translation_element(std::vector<double> shift) {
    GroupElement e;
    e.group = GroupName::Translation;
    e.side = ActionSide::Input;
    e.shift = std::move(shift);
    return e;
}

GroupElement random_group_element(const GroupSpec& spec, RngStream& rng) {
    switch (spec.name) {
        case GroupName::SO: {
            std::vector<double> alphas(spec.dim * (spec.dim - 1) / 2);
            for (double& a : alphas) a = rng.uniform();
            return so_element(spec.dim, alphas, spec.side);
        }
        case GroupName::SU: {
            std::vector<double> alphas(spec.dim * spec.dim - 1);
            for (double& a : alphas) a = rng.uniform();
            return su_element(spec.dim, alphas, spec.side);
        }
        case GroupName::Translation: {
            std::vector<double> shift(spec.dim);
            for (double& c : shift) c = rng.normal();
            return translation_element(std::move(shift));
        }
    }
    throw std::invalid_argument("random_group_element: unsupported group");
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

namespace {

template <typename T>
CorrelatorTensor<T> transform_correlator_impl(const CorrelatorTensor<T>& g,
                                              const GroupElement& elem) {
    if (elem.side != ActionSide::Output)
        throw std::invalid_argument("transform_correlator: output-side elements only");
    const Matrix<T>& m = element_matrix<T>(elem);
    const std::size_t d_out = g.mean.shape().empty() ? 0 : g.mean.shape()[0];
    if (m.rows() != d_out || m.cols() != d_out)
        throw std::invalid_argument("transform_correlator: element dimension mismatch");

    CorrelatorTensor<T> out = g;
    out.mean = transform_mean(g.mean, g.slots, m);

    // stderr propagation: variance pushed through every slot contraction,
    // plus one generation-error term per slot.
    const RMatrix q = abs_squared(m);
    RTensor var(g.std_error.shape());
    for (std::size_t i = 0; i < var.size(); ++i)
        var[i] = g.std_error[i] * g.std_error[i];
    for (std::size_t t = 0; t < g.slots.size(); ++t) var = contract_index(var, q, t);

    if (elem.offdiag_error > 0.0) {
        const double dr2 = elem.offdiag_error * elem.offdiag_error;
        const std::size_t n = g.slots.size();
        for (std::size_t t = 0; t < n; ++t) {
            // Contract every slot except t, then square-sum over slot t's
            // untransformed index: the derivative term for that slot.
            DenseTensor<T> partial = g.mean;
            for (std::size_t s = 0; s < n; ++s)
                if (s != t)
                    partial = contract_index(partial, slot_matrix(m, g.slots[s].conjugate), s);
            // Reduce axis t by |.|^2 and broadcast back.
            std::vector<std::size_t> rshape = partial.shape();
            const std::size_t axis_len = rshape[t];
            rshape[t] = 1;
            RTensor reduced(rshape);
            std::vector<std::size_t> idx(partial.rank(), 0);
            do {
                const std::size_t save = idx[t];
                if (save == 0) {
                    double acc = 0.0;
                    for (std::size_t v = 0; v < axis_len; ++v) {
                        idx[t] = v;
                        const double a = detail::abs_val(partial.at(idx));
                        acc += a * a;
                    }
                    idx[t] = 0;
                    reduced.at(idx) = acc;
                }
            } while (next_multi_index(idx, partial.shape()));
            // Add dr^2 * reduced to every element sharing the reduced indices.
            std::fill(idx.begin(), idx.end(), 0);
            std::size_t flat = 0;
            do {
                const std::size_t save = idx[t];
                idx[t] = 0;
                var[flat] += dr2 * reduced.at(idx);
                idx[t] = save;
                ++flat;
            } while (next_multi_index(idx, var.shape()));
        }
    }
    for (std::size_t i = 0; i < var.size(); ++i) out.std_error[i] = std::sqrt(var[i]);
    return out;
}

}  // namespace

CorrelatorTensor<double> transform_correlator(const CorrelatorTensor<double>& g,
                                              const GroupElement& elem) {
    return transform_correlator_impl(g, elem);
}

CorrelatorTensor<cplx> transform_correlator(const CorrelatorTensor<cplx>& g,
                                            const GroupElement& elem) {
    return transform_correlator_impl(g, elem);
}

InputSet transform_inputs(const InputSet& inputs, const GroupElement& elem) {
    if (elem.side != ActionSide::Input)
        throw std::invalid_argument("transform_inputs: input-side elements only");
    InputSet out = inputs;
    if (elem.group == GroupName::Translation) {
        if (elem.shift.size() != inputs.dim)
            throw std::invalid_argument("transform_inputs: shift dimension mismatch");
        for (auto& p : out.points)
            for (std::size_t j = 0; j < p.size(); ++j) p[j] += elem.shift[j];
        return out;
    }
    if (elem.group == GroupName::SO) {
        if (elem.rotation.cols() != inputs.dim)
            throw std::invalid_argument("transform_inputs: rotation dimension mismatch");
        for (auto& p : out.points) p = elem.rotation.apply(p);
        return out;
    }
    throw std::invalid_argument("transform_inputs: unsupported group for real inputs");
}

// ---------------------------------------------------------------------------
// Deviation statistics
// ---------------------------------------------------------------------------

namespace {

template <typename T>
DeviationReport deviation_report_impl(std::span<const CorrelatorTensor<T>> experiments,
                                      const GroupSpec& group, std::size_t elements,
                                      RngStream rng, DeviationOptions opts) {
    if (experiments.size() < 2)
        throw std::invalid_argument("deviation_report: need at least 2 experiments");
    if (elements < 1) throw std::invalid_argument("deviation_report: need at least 1 element");
    if (group.side != ActionSide::Output)
        throw std::invalid_argument("deviation_report: output-side groups only");
    if (group.name == GroupName::Translation)
        throw std::invalid_argument(
            "deviation_report: translation checks re-estimate correlators on shifted inputs");

    const auto& shape = experiments[0].mean.shape();
    for (const auto& e : experiments)
        if (e.mean.shape() != shape)
            throw std::invalid_argument("deviation_report: tensor shapes differ between "
                                        "experiments");
    const std::size_t entry_count = experiments[0].mean.size();
    const std::size_t order = experiments[0].order();
    const std::size_t exp_count = experiments.size();

    // Raw-tensor statistics across experiments.
    DenseTensor<T> mean_g(shape);
    RTensor dg_elem(shape);
    for (std::size_t i = 0; i < entry_count; ++i) {
        T acc{};
        for (const auto& e : experiments) acc += e.mean[i];
        acc *= T{1.0 / static_cast<double>(exp_count)};
        mean_g[i] = acc;
        double ss = 0.0;
        for (const auto& e : experiments) {
            const double d = detail::abs_val(e.mean[i] - acc);
            ss += d * d;
        }
        dg_elem[i] = std::sqrt(ss / static_cast<double>(exp_count - 1));
    }
    double delta_g = 0.0;
    for (std::size_t i = 0; i < entry_count; ++i) delta_g += dg_elem[i];
    delta_g /= static_cast<double>(entry_count);

    // Group elements, shared across experiments.
    std::vector<GroupElement> elems;
    elems.reserve(elements);
    double delta_r = 0.0;
    for (std::size_t b = 0; b < elements; ++b) {
        elems.push_back(random_group_element(group, rng));
        delta_r += elems.back().offdiag_error;
    }
    delta_r /= static_cast<double>(elements);

    // Per-experiment deviation tensors, averaged over group elements.
    std::vector<RTensor> m_exp(exp_count, RTensor(shape));
    for (std::size_t e = 0; e < exp_count; ++e) {
        for (const auto& elem : elems) {
            const Matrix<T>& m = element_matrix<T>(elem);
            DenseTensor<T> transformed = transform_mean(experiments[e].mean,
                                                        experiments[e].slots, m);
            for (std::size_t i = 0; i < entry_count; ++i)
                m_exp[e][i] += detail::abs_val(transformed[i] - experiments[e].mean[i]);
        }
        m_exp[e] *= 1.0 / static_cast<double>(elements);
    }

    RTensor mean_m(shape), std_m(shape);
    for (std::size_t i = 0; i < entry_count; ++i) {
        double acc = 0.0;
        for (std::size_t e = 0; e < exp_count; ++e) acc += m_exp[e][i];
        acc /= static_cast<double>(exp_count);
        mean_m[i] = acc;
        double ss = 0.0;
        for (std::size_t e = 0; e < exp_count; ++e) {
            const double d = m_exp[e][i] - acc;
            ss += d * d;
        }
        std_m[i] = std::sqrt(ss / static_cast<double>(exp_count - 1));
    }

    // Propagated bound: per element b, per entry, one generation-error term
    // per tensor slot plus the pushed-through correlator stderr.
    RTensor dg2(shape);
    for (std::size_t i = 0; i < entry_count; ++i) dg2[i] = dg_elem[i] * dg_elem[i];
    const double dr2 = delta_r * delta_r;

    double delta_g_prime = 0.0;
    std::vector<std::size_t> idx(order, 0);
    for (const auto& elem : elems) {
        const Matrix<T>& m = element_matrix<T>(elem);
        RTensor var_from_g = dg2;
        const RMatrix q = abs_squared(m);
        for (std::size_t t = 0; t < order; ++t)
            var_from_g = contract_index(var_from_g, q, t);

        // Slot-derivative terms, reduced over the untransformed index.
        std::vector<RTensor> reduced_terms;
        reduced_terms.reserve(order);
        for (std::size_t t = 0; t < order; ++t) {
            DenseTensor<T> partial = mean_g;
            for (std::size_t s = 0; s < order; ++s)
                if (s != t)
                    partial = contract_index(partial,
                                             slot_matrix(m, experiments[0].slots[s].conjugate),
                                             s);
            std::vector<std::size_t> rshape = shape;
            const std::size_t axis_len = rshape[t];
            rshape[t] = 1;
            RTensor reduced(rshape);
            std::fill(idx.begin(), idx.end(), 0);
            do {
                if (idx[t] != 0) continue;
                double acc = 0.0;
                for (std::size_t v = 0; v < axis_len; ++v) {
                    idx[t] = v;
                    const double a = detail::abs_val(partial.at(idx));
                    acc += a * a;
                }
                idx[t] = 0;
                reduced.at(idx) = acc;
            } while (next_multi_index(idx, shape));
            reduced_terms.push_back(std::move(reduced));
        }

        double elem_avg = 0.0;
        std::fill(idx.begin(), idx.end(), 0);
        std::size_t flat = 0;
        do {
            double total = var_from_g[flat];
            for (std::size_t t = 0; t < order; ++t) {
                const std::size_t save = idx[t];
                idx[t] = 0;
                total += dr2 * reduced_terms[t].at(idx);
                idx[t] = save;
            }
            elem_avg += std::sqrt(total);
            ++flat;
        } while (next_multi_index(idx, shape));
        delta_g_prime += elem_avg / static_cast<double>(entry_count);
    }
    delta_g_prime /= static_cast<double>(elements);

    DeviationReport report;
    report.element_count = elements;
    report.experiment_count = exp_count;
    report.tensor_order = order;
    report.delta_g = delta_g;
    report.delta_g_prime = delta_g_prime;
    report.delta_r = delta_r;
    report.delta_m = std::hypot(delta_g_prime, delta_g);
    report.band_multiplier = opts.band_multiplier;
    report.formula = kDeviationFormula;
    report.elementwise_mean = mean_m;

    double mu = 0.0, sg = 0.0;
    std::size_t pass = 0;
    for (std::size_t i = 0; i < entry_count; ++i) {
        mu += mean_m[i];
        sg += std_m[i];
        if (mean_m[i] <= opts.band_multiplier * report.delta_m) ++pass;
    }
    report.mu_m = mu / static_cast<double>(entry_count);
    report.sigma_m = sg / static_cast<double>(entry_count);
    report.pass_fraction = static_cast<double>(pass) / static_cast<double>(entry_count);
    return report;
}

}  // namespace

DeviationReport deviation_report(std::span<const CorrelatorTensor<double>> experiments,
                                 const GroupSpec& group, std::size_t elements, RngStream rng,
                                 DeviationOptions opts) {
    return deviation_report_impl(experiments, group, elements, rng, opts);
}

DeviationReport deviation_report(std::span<const CorrelatorTensor<cplx>> experiments,
                                 const GroupSpec& group, std::size_t elements, RngStream rng,
                                 DeviationOptions opts) {
    return deviation_report_impl(experiments, group, elements, rng, opts);
}

}  // namespace nnsym
