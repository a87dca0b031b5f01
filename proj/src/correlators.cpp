#include "nnsym/correlators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "nnsym/workers.hpp"

namespace nnsym {

void InputSet::validate() const {
    if (dim == 0) throw std::invalid_argument("input set: zero dimension");
    if (points.empty()) throw std::invalid_argument("input set: no points");
    for (const auto& p : points)
        if (p.size() != dim)
            throw std::invalid_argument("input set: point dimension " +
                                        std::to_string(p.size()) + " != " +
                                        std::to_string(dim));
}

namespace {

void check_slots(const InputSet& inputs, std::span<const Slot> slots) {
    if (slots.empty()) throw std::invalid_argument("correlator: no slots");
    for (const Slot& s : slots)
        if (s.point >= inputs.count())
            throw std::invalid_argument("correlator: slot point index " +
                                        std::to_string(s.point) + " out of range");
}

std::vector<std::size_t> used_points(std::span<const Slot> slots) {
    std::vector<std::size_t> pts;
    for (const Slot& s : slots) pts.push_back(s.point);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
}

struct Partials {
    std::vector<double> sum_re, sum_im, sum_sq;
};

// Accumulates the outer product of outputs over a block of draws.
// T is double (real ensembles) or cplx.
template <typename T>
void accumulate_block(const ArchitectureSpec& spec, const InputSet& inputs,
                      std::span<const Slot> slots, std::size_t draws, RngStream stream,
                      const MetropolisOptions& mcmc, Partials& out) {
    const std::size_t n = slots.size();
    const std::size_t d_out = spec.output_dim;
    std::size_t total = 1;
    for (std::size_t k = 0; k < n; ++k) total *= d_out;

    out.sum_re.assign(total, 0.0);
    out.sum_sq.assign(total, 0.0);
    constexpr bool complex_field = std::is_same_v<T, cplx>;
    if (complex_field) out.sum_im.assign(total, 0.0);

    NetworkSampler sampler(spec, stream, mcmc);
    ForwardWorkspace ws;
    const auto pts = used_points(slots);
    std::vector<std::vector<T>> outputs(inputs.count());
    std::vector<std::size_t> idx(n, 0);
    std::vector<std::size_t> shape(n, d_out);

    for (std::size_t s = 0; s < draws; ++s) {
        const NetworkDraw& net = sampler.next();
        for (std::size_t p : pts) {
            if constexpr (complex_field)
                forward_complex(net, inputs.points[p], ws, outputs[p]);
            else
                forward(net, inputs.points[p], ws, outputs[p]);
        }
        std::fill(idx.begin(), idx.end(), 0);
        std::size_t flat = 0;
        do {
            T v{1};
            for (std::size_t t = 0; t < n; ++t) {
                T o = outputs[slots[t].point][idx[t]];
                if constexpr (complex_field) {
                    if (slots[t].conjugate) o = std::conj(o);
                }
                v *= o;
            }
            if constexpr (complex_field) {
                out.sum_re[flat] += v.real();
                out.sum_im[flat] += v.imag();
                out.sum_sq[flat] += v.real() * v.real() + v.imag() * v.imag();
            } else {
                out.sum_re[flat] += v;
                out.sum_sq[flat] += v * v;
            }
            ++flat;
        } while (next_multi_index(idx, shape));
    }
}

template <typename T>
CorrelatorTensor<T> estimate_impl(const ArchitectureSpec& spec, const InputSet& inputs,
                                  std::span<const Slot> slots, std::size_t samples,
                                  RngStream rng, int workers, MetropolisOptions mcmc) {
    spec.validate();
    inputs.validate();
    check_slots(inputs, slots);
    if (inputs.dim != spec.input_dim)
        throw std::invalid_argument("correlator: input set dimension != architecture input dim");
    if (samples < 2) throw std::invalid_argument("correlator: need at least 2 samples");
    if (workers < 1) throw std::invalid_argument("correlator: need at least 1 worker");
    if constexpr (std::is_same_v<T, cplx>) {
        if (spec.field != FieldType::Complex)
            throw std::invalid_argument("complex correlator on a real-valued ensemble");
    } else {
        if (spec.field != FieldType::Real)
            throw std::invalid_argument("real correlator on a complex ensemble");
    }

    const std::size_t w_count = static_cast<std::size_t>(workers);
    std::vector<Partials> partials(w_count);
    detail::run_workers(w_count, [&](std::size_t w) {
        const std::size_t lo = samples * w / w_count;
        const std::size_t hi = samples * (w + 1) / w_count;
        accumulate_block<T>(spec, inputs, slots, hi - lo, rng.spawn(w), mcmc, partials[w]);
    });

    const std::size_t n = slots.size();
    std::vector<std::size_t> shape(n, spec.output_dim);
    CorrelatorTensor<T> result;
    result.slots.assign(slots.begin(), slots.end());
    result.mean = DenseTensor<T>(shape);
    result.std_error = DenseTensor<double>(shape);
    result.sample_count = samples;
    result.seed = rng.seed();
    result.stream_id = rng.stream_id();
    result.workers = workers;

    const std::size_t total = result.mean.size();
    const double s_count = static_cast<double>(samples);
    for (std::size_t i = 0; i < total; ++i) {
        // Merge partial sums in fixed worker order: bitwise reproducible.
        double sr = 0.0, si = 0.0, sq = 0.0;
        for (std::size_t w = 0; w < w_count; ++w) {
            sr += partials[w].sum_re[i];
            if constexpr (std::is_same_v<T, cplx>) si += partials[w].sum_im[i];
            sq += partials[w].sum_sq[i];
        }
        double mean_abs_sq;
        if constexpr (std::is_same_v<T, cplx>) {
            const cplx m(sr / s_count, si / s_count);
            result.mean[i] = m;
            mean_abs_sq = std::norm(m);
        } else {
            const double m = sr / s_count;
            result.mean[i] = m;
            mean_abs_sq = m * m;
        }
        const double var = std::max(0.0, (sq - s_count * mean_abs_sq) / (s_count - 1.0));
        result.std_error[i] = std::sqrt(var / s_count);
    }
    return result;
}

}  // namespace

CorrelatorTensor<double> estimate_correlator(const ArchitectureSpec& spec,
                                             const InputSet& inputs,
                                             std::span<const Slot> slots, std::size_t samples,
                                             RngStream rng, int workers,
                                             MetropolisOptions mcmc) {
    return estimate_impl<double>(spec, inputs, slots, samples, rng, workers, mcmc);
}

CorrelatorTensor<cplx> estimate_correlator_complex(const ArchitectureSpec& spec,
                                                   const InputSet& inputs,
                                                   std::span<const Slot> slots,
                                                   std::size_t samples, RngStream rng,
                                                   int workers, MetropolisOptions mcmc) {
    return estimate_impl<cplx>(spec, inputs, slots, samples, rng, workers, mcmc);
}

// ---------------------------------------------------------------------------
// Kernel estimation
// ---------------------------------------------------------------------------

Kernel estimate_kernel(const ArchitectureSpec& spec, const InputSet& inputs,
                       std::size_t samples, RngStream rng, int workers,
                       MetropolisOptions mcmc) {
    spec.validate();
    inputs.validate();
    if (spec.field != FieldType::Real)
        throw std::invalid_argument("kernel: real-valued ensembles only");
    if (inputs.dim != spec.input_dim)
        throw std::invalid_argument("kernel: input set dimension != architecture input dim");
    if (samples < 2) throw std::invalid_argument("kernel: need at least 2 samples");
    if (workers < 1) throw std::invalid_argument("kernel: need at least 1 worker");

    const std::size_t m = inputs.count();
    const std::size_t pairs = m * (m + 1) / 2;
    const std::size_t w_count = static_cast<std::size_t>(workers);

    struct KPartial {
        std::vector<double> sum, sum_sq;
    };
    std::vector<KPartial> partials(w_count);
    detail::run_workers(w_count, [&](std::size_t w) {
        const std::size_t lo = samples * w / w_count;
        const std::size_t hi = samples * (w + 1) / w_count;
        KPartial& part = partials[w];
        part.sum.assign(pairs, 0.0);
        part.sum_sq.assign(pairs, 0.0);
        NetworkSampler sampler(spec, rng.spawn(w), mcmc);
        ForwardWorkspace ws;
        std::vector<std::vector<double>> outs(m);
        const double inv_d = 1.0 / static_cast<double>(spec.output_dim);
        for (std::size_t s = lo; s < hi; ++s) {
            const NetworkDraw& net = sampler.next();
            for (std::size_t p = 0; p < m; ++p) forward(net, inputs.points[p], ws, outs[p]);
            std::size_t q = 0;
            for (std::size_t a = 0; a < m; ++a)
                for (std::size_t b = a; b < m; ++b, ++q) {
                    double v = 0.0;
                    for (std::size_t i = 0; i < spec.output_dim; ++i)
                        v += outs[a][i] * outs[b][i];
                    v *= inv_d;
                    part.sum[q] += v;
                    part.sum_sq[q] += v * v;
                }
        }
    });

    Kernel k;
    k.inputs = inputs;
    k.values = RMatrix(m, m);
    k.std_error = RMatrix(m, m);
    k.sample_count = samples;
    const double s_count = static_cast<double>(samples);
    std::size_t q = 0;
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a; b < m; ++b, ++q) {
            double sum = 0.0, sum_sq = 0.0;
            for (std::size_t w = 0; w < w_count; ++w) {
                sum += partials[w].sum[q];
                sum_sq += partials[w].sum_sq[q];
            }
            const double mean = sum / s_count;
            const double var = std::max(0.0, (sum_sq - s_count * mean * mean) / (s_count - 1.0));
            const double err = std::sqrt(var / s_count);
            k.values(a, b) = mean;
            k.values(b, a) = mean;  // symmetric by construction
            k.std_error(a, b) = err;
            k.std_error(b, a) = err;
        }
    return k;
}

// ---------------------------------------------------------------------------
// Wick tensors
// ---------------------------------------------------------------------------

namespace {

void pairings_rec(std::vector<bool>& used,
                  std::vector<std::pair<std::size_t, std::size_t>>& current, std::size_t n,
                  std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& out) {
    std::size_t a = n;
    for (std::size_t i = 0; i < n; ++i)
        if (!used[i]) {
            a = i;
            break;
        }
    if (a == n) {
        out.push_back(current);
        return;
    }
    used[a] = true;
    for (std::size_t b = a + 1; b < n; ++b) {
        if (used[b]) continue;
        used[b] = true;
        current.emplace_back(a, b);
        pairings_rec(used, current, n, out);
        current.pop_back();
        used[b] = false;
    }
    used[a] = false;
}

}  // namespace

std::vector<std::vector<std::pair<std::size_t, std::size_t>>> pair_partitions(std::size_t n) {
    if (n % 2 != 0) throw std::invalid_argument("pair_partitions: order must be even");
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> out;
    std::vector<bool> used(n, false);
    std::vector<std::pair<std::size_t, std::size_t>> current;
    pairings_rec(used, current, n, out);
    return out;
}

RTensor wick_correlator(const Kernel& kernel, std::span<const std::size_t> slot_points,
                        std::size_t out_dim) {
    return wick_correlator_with_error(kernel, slot_points, out_dim).mean;
}

WickTensor wick_correlator_with_error(const Kernel& kernel,
                                      std::span<const std::size_t> slot_points,
                                      std::size_t out_dim) {
    const std::size_t n = slot_points.size();
    if (n % 2 != 0) throw std::invalid_argument("wick_correlator: order must be even");
    for (std::size_t p : slot_points)
        if (p >= kernel.inputs.count())
            throw std::invalid_argument("wick_correlator: slot point out of kernel range");

    const std::size_t half = n / 2;
    std::vector<std::size_t> shape(n, out_dim);
    WickTensor result{RTensor(shape), RTensor(shape)};

    // Gradient of every element w.r.t. each distinct kernel entry, for the
    // stderr propagation (kernel entries treated as independent).
    const std::size_t m = kernel.inputs.count();
    std::vector<RTensor> grads(m * (m + 1) / 2, RTensor(shape));
    auto key = [m](std::size_t a, std::size_t b) {
        if (a > b) std::swap(a, b);
        return a * m - a * (a - 1) / 2 + (b - a);
    };

    const auto partitions = pair_partitions(n);
    std::vector<std::size_t> assign(half, 0);
    std::vector<std::size_t> assign_shape(half, out_dim);
    std::vector<std::size_t> idx(n, 0);

    for (const auto& partition : partitions) {
        double value = 1.0;
        for (const auto& [a, b] : partition)
            value *= kernel.values(slot_points[a], slot_points[b]);

        std::fill(assign.begin(), assign.end(), 0);
        do {
            for (std::size_t q = 0; q < half; ++q) {
                idx[partition[q].first] = assign[q];
                idx[partition[q].second] = assign[q];
            }
            const std::size_t flat = result.mean.flat_index(idx);
            result.mean[flat] += value;
            for (std::size_t q = 0; q < half; ++q) {
                const auto [a, b] = partition[q];
                double d = 1.0;
                for (std::size_t r = 0; r < half; ++r) {
                    if (r == q) continue;
                    d *= kernel.values(slot_points[partition[r].first],
                                       slot_points[partition[r].second]);
                }
                grads[key(slot_points[a], slot_points[b])][flat] += d;
            }
        } while (next_multi_index(assign, assign_shape));
    }

    for (std::size_t i = 0; i < result.mean.size(); ++i) {
        double var = 0.0;
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = a; b < m; ++b) {
                const double g = grads[key(a, b)][i];
                const double e = kernel.std_error(a, b);
                var += g * g * e * e;
            }
        result.std_error[i] = std::sqrt(var);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Connected correlators
// ---------------------------------------------------------------------------

RTensor connected_2pt(const CorrelatorTensor<double>& g2, const OnePointLookup& one_pt) {
    if (g2.order() != 2) throw std::invalid_argument("connected_2pt: order must be 2");
    RTensor out = g2.mean;
    const std::size_t d = out.shape()[0];
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            out.at({i, j}) -=
                one_pt(g2.slots[0].point, i) * one_pt(g2.slots[1].point, j);
    return out;
}

RTensor connected_4pt(const CorrelatorTensor<double>& g4, const TwoPointLookup& two_pt) {
    if (g4.order() != 4) throw std::invalid_argument("connected_4pt: order must be 4");
    RTensor out = g4.mean;
    const std::size_t d = out.shape()[0];
    const std::size_t pairings[3][4] = {{0, 1, 2, 3}, {0, 2, 1, 3}, {0, 3, 1, 2}};
    const std::vector<std::size_t> shape(4, d);
    std::vector<std::size_t> idx(4, 0);
    do {
        double sub = 0.0;
        for (const auto& pr : pairings) {
            const double first = two_pt(g4.slots[pr[0]].point, idx[pr[0]],
                                        g4.slots[pr[1]].point, idx[pr[1]]);
            const double second = two_pt(g4.slots[pr[2]].point, idx[pr[2]],
                                         g4.slots[pr[3]].point, idx[pr[3]]);
            sub += first * second;
        }
        out.at(idx) -= sub;
    } while (next_multi_index(idx, shape));
    return out;
}

// ---------------------------------------------------------------------------
// GP limit check
// ---------------------------------------------------------------------------

GpLimitReport gp_limit_check(const std::function<ArchitectureSpec(std::size_t)>& family,
                             const InputSet& inputs, std::span<const std::size_t> widths,
                             std::size_t kernel_samples, std::size_t fourpt_samples,
                             RngStream rng, int workers) {
    if (inputs.count() < 2)
        throw std::invalid_argument("gp_limit_check: need at least two input points");
    const std::vector<std::size_t> slot_points{0, 0, 1, 1};
    std::vector<Slot> slots;
    for (std::size_t p : slot_points) slots.push_back(Slot{p, false});

    GpLimitReport report;
    for (std::size_t wi = 0; wi < widths.size(); ++wi) {
        const std::size_t width = widths[wi];
        ArchitectureSpec spec = family(width);
        Kernel kernel = estimate_kernel(spec, inputs, kernel_samples,
                                        rng.spawn(2 * wi), workers);
        CorrelatorTensor<double> g4 = estimate_correlator(
            spec, inputs, slots, fourpt_samples, rng.spawn(2 * wi + 1), workers);
        WickTensor wick = wick_correlator_with_error(kernel, slot_points, spec.output_dim);

        GpLimitRow row;
        row.width = width;
        row.elements = g4.mean.size();
        std::size_t within = 0;
        for (std::size_t i = 0; i < g4.mean.size(); ++i) {
            const double diff = std::fabs(g4.mean[i] - wick.mean[i]);
            const double err = std::hypot(g4.std_error[i], wick.std_error[i]);
            double sigma;
            if (err == 0.0)
                sigma = diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
            else
                sigma = diff / err;
            row.max_sigma = std::max(row.max_sigma, sigma);
            if (sigma <= 4.0) ++within;
        }
        row.frac_within_4sigma =
            static_cast<double>(within) / static_cast<double>(row.elements);
        report.rows.push_back(row);
    }
    report.max_sigma_decreasing = true;
    for (std::size_t i = 1; i < report.rows.size(); ++i)
        if (!(report.rows[i].max_sigma < report.rows[i - 1].max_sigma))
            report.max_sigma_decreasing = false;
    return report;
}

// ---------------------------------------------------------------------------
// Perturbative non-Gaussian 2-pt
// ---------------------------------------------------------------------------

PerturbativeKernel perturbative_ngp_2pt(double sigma, double lambda, const Kernel& hidden,
                                        std::size_t width, std::size_t out_dim) {
    if (!(sigma > 0.0)) throw std::invalid_argument("perturbative_ngp_2pt: sigma must be > 0");
    if (lambda < 0.0) throw std::invalid_argument("perturbative_ngp_2pt: lambda must be >= 0");
    if (width == 0 || out_dim == 0)
        throw std::invalid_argument("perturbative_ngp_2pt: zero dimensions");

    const double s2 = sigma * sigma;
    const double m2 = s2;            // E[theta^2]
    const double m4 = 3.0 * s2 * s2; // E[theta^4]
    const double m6 = 15.0 * s2 * s2 * s2;
    const double entries = static_cast<double>(width * out_dim);  // index pairs of theta

    // Numerator correction for one fixed (i1,j1):
    //   sum over (ab) != (cd) != (i1,j1), all mutually distinct:   m2*m2*m2
    //   sum over (ab) != (i1,j1):   m2*m4  +  2*m4*m2
    //   coincident term:            m6
    const double correction = (entries - 1.0) * (entries - 2.0) * m2 * m2 * m2 +
                              (entries - 1.0) * (m2 * m4 + 2.0 * m4 * m2) + m6;
    // Denominator: sum over (ab): m4, plus sum over (ab) != (cd): m2*m2.
    const double denom_sum = entries * m4 + entries * (entries - 1.0) * m2 * m2;

    PerturbativeKernel out;
    out.coefficient = (m2 - lambda * correction) / (1.0 - lambda * denom_sum);
    out.order_lambda_coefficient = m2 * denom_sum - correction;
    out.large_lambda_warning = lambda > 0.1 / ((2.0 * s2) * (2.0 * s2));

    const double factor = static_cast<double>(width) * out.coefficient;
    out.kernel.inputs = hidden.inputs;
    out.kernel.sample_count = hidden.sample_count;
    const std::size_t m = hidden.inputs.count();
    out.kernel.values = RMatrix(m, m);
    out.kernel.std_error = RMatrix(m, m);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) {
            out.kernel.values(a, b) = factor * hidden.values(a, b);
            out.kernel.std_error(a, b) = std::fabs(factor) * hidden.std_error(a, b);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Ward identity sum
// ---------------------------------------------------------------------------

CorrelatorTensor<double> ward_identity_sum(const ArchitectureSpec& spec,
                                           const InputSet& inputs, const RMatrix& generator,
                                           std::size_t samples, RngStream rng, int workers) {
    spec.validate();
    inputs.validate();
    if (generator.rows() != spec.output_dim || generator.cols() != spec.output_dim)
        throw std::invalid_argument("ward_identity_sum: generator dimension mismatch");
    if (samples < 2) throw std::invalid_argument("ward_identity_sum: need at least 2 samples");

    const std::size_t n = inputs.count();
    const std::size_t d_out = spec.output_dim;
    std::vector<std::size_t> shape(n, d_out);
    std::size_t total = 1;
    for (std::size_t k = 0; k < n; ++k) total *= d_out;

    const std::size_t w_count = static_cast<std::size_t>(std::max(workers, 1));
    std::vector<Partials> partials(w_count);
    detail::run_workers(w_count, [&](std::size_t w) {
        const std::size_t lo = samples * w / w_count;
        const std::size_t hi = samples * (w + 1) / w_count;
        Partials& part = partials[w];
        part.sum_re.assign(total, 0.0);
        part.sum_sq.assign(total, 0.0);
        NetworkSampler sampler(spec, rng.spawn(w));
        ForwardWorkspace ws;
        std::vector<std::vector<double>> outs(n);
        std::vector<std::vector<double>> gen_outs(n);
        std::vector<std::size_t> idx(n, 0);
        std::vector<std::size_t> sh(n, d_out);
        for (std::size_t s = lo; s < hi; ++s) {
            const NetworkDraw& net = sampler.next();
            for (std::size_t p = 0; p < n; ++p) {
                forward(net, inputs.points[p], ws, outs[p]);
                gen_outs[p] = generator.apply(outs[p]);
            }
            std::fill(idx.begin(), idx.end(), 0);
            std::size_t flat = 0;
            do {
                double v = 0.0;
                for (std::size_t ins = 0; ins < n; ++ins) {
                    double term = 1.0;
                    for (std::size_t t = 0; t < n; ++t)
                        term *= (t == ins ? gen_outs[t][idx[t]] : outs[t][idx[t]]);
                    v += term;
                }
                part.sum_re[flat] += v;
                part.sum_sq[flat] += v * v;
                ++flat;
            } while (next_multi_index(idx, sh));
        }
    });

    CorrelatorTensor<double> result;
    for (std::size_t p = 0; p < n; ++p) result.slots.push_back(Slot{p, false});
    result.mean = RTensor(shape);
    result.std_error = RTensor(shape);
    result.sample_count = samples;
    result.seed = rng.seed();
    result.stream_id = rng.stream_id();
    result.workers = static_cast<int>(w_count);
    const double s_count = static_cast<double>(samples);
    for (std::size_t i = 0; i < total; ++i) {
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t w = 0; w < w_count; ++w) {
            sum += partials[w].sum_re[i];
            sum_sq += partials[w].sum_sq[i];
        }
        const double mean = sum / s_count;
        const double var = std::max(0.0, (sum_sq - s_count * mean * mean) / (s_count - 1.0));
        result.mean[i] = mean;
        result.std_error[i] = std::sqrt(var / s_count);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Exact GP draws
// ---------------------------------------------------------------------------

GpSampler::GpSampler(const Kernel& kernel, std::size_t out_dim, RngStream rng)
    : out_dim_(out_dim), rng_(rng) {
    chol_ = cholesky(kernel.values);
}

RMatrix GpSampler::next() {
    const std::size_t m = chol_.rows();
    RMatrix f(out_dim_, m);
    std::vector<double> z(m);
    for (std::size_t i = 0; i < out_dim_; ++i) {
        for (double& v : z) v = rng_.normal();
        for (std::size_t a = 0; a < m; ++a) {
            double acc = 0.0;
            for (std::size_t b = 0; b <= a; ++b) acc += chol_(a, b) * z[b];
            f(i, a) = acc;
        }
    }
    return f;
}

CorrelatorTensor<double> estimate_gp_correlator(const Kernel& kernel, std::size_t out_dim,
                                                std::span<const Slot> slots,
                                                std::size_t samples, RngStream rng) {
    if (samples < 2) throw std::invalid_argument("gp correlator: need at least 2 samples");
    for (const Slot& s : slots)
        if (s.point >= kernel.inputs.count())
            throw std::invalid_argument("gp correlator: slot point out of range");

    const std::size_t n = slots.size();
    std::vector<std::size_t> shape(n, out_dim);
    CorrelatorTensor<double> result;
    result.slots.assign(slots.begin(), slots.end());
    result.mean = RTensor(shape);
    result.std_error = RTensor(shape);
    result.sample_count = samples;
    result.seed = rng.seed();
    result.stream_id = rng.stream_id();

    std::vector<double> sum(result.mean.size(), 0.0), sum_sq(result.mean.size(), 0.0);
    GpSampler sampler(kernel, out_dim, rng);
    std::vector<std::size_t> idx(n, 0);
    for (std::size_t s = 0; s < samples; ++s) {
        RMatrix f = sampler.next();
        std::fill(idx.begin(), idx.end(), 0);
        std::size_t flat = 0;
        do {
            double v = 1.0;
            for (std::size_t t = 0; t < n; ++t) v *= f(idx[t], slots[t].point);
            sum[flat] += v;
            sum_sq[flat] += v * v;
            ++flat;
        } while (next_multi_index(idx, shape));
    }
    const double s_count = static_cast<double>(samples);
    for (std::size_t i = 0; i < result.mean.size(); ++i) {
        const double mean = sum[i] / s_count;
        const double var = std::max(0.0, (sum_sq[i] - s_count * mean * mean) / (s_count - 1.0));
        result.mean[i] = mean;
        result.std_error[i] = std::sqrt(var / s_count);
    }
    return result;
}

}  // namespace nnsym
