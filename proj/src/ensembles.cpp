#include "nnsym/ensembles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nnsym {

namespace {

double positive_mod1(double v) {
    double r = v - std::floor(v);
    return r < 1.0 ? r : 0.0;  // floor rounding can land exactly on 1.0
}

std::size_t shape_product(std::span<const std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

std::size_t layer_in(const LayerSpec& layer, std::size_t incoming) {
    return std::visit(
        [&](const auto& l) -> std::size_t {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, ActivationLayer>)
                return incoming;
            else
                return l.in;
        },
        layer);
}

std::size_t layer_out(const LayerSpec& layer, std::size_t incoming) {
    return std::visit(
        [&](const auto& l) -> std::size_t {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, ActivationLayer>)
                return incoming;
            else
                return l.out;
        },
        layer);
}

}  // namespace

bool ParameterPrior::zero_mean() const {
    if (const auto* g = std::get_if<GaussianPrior>(&kind)) return g->mean == 0.0;
    if (std::holds_alternative<QuarticInvariantPrior>(kind)) return true;
    return false;  // uniform-circle mean is 1/2
}

void ParameterPrior::validate() const {
    if (const auto* g = std::get_if<GaussianPrior>(&kind)) {
        if (!(g->stddev > 0.0))
            throw std::invalid_argument("gaussian prior: stddev must be > 0");
    } else if (const auto* q = std::get_if<QuarticInvariantPrior>(&kind)) {
        if (!(q->stddev > 0.0))
            throw std::invalid_argument("quartic prior: stddev must be > 0");
        if (q->lambda < 0.0)
            throw std::invalid_argument("quartic prior: lambda must be >= 0");
    }
    if (shape.empty() || shape_product(shape) == 0)
        throw std::invalid_argument("parameter prior: empty shape");
}

void ArchitectureSpec::validate() const {
    if (input_dim == 0 || output_dim == 0)
        throw std::invalid_argument("architecture: zero input or output dimension");
    if (layers.empty()) throw std::invalid_argument("architecture: no layers");

    std::size_t width = input_dim;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const LayerSpec& layer = layers[li];
        if (layer_in(layer, width) != width)
            throw std::invalid_argument("architecture: layer " + std::to_string(li) +
                                        " expects input dim " +
                                        std::to_string(layer_in(layer, width)) + ", got " +
                                        std::to_string(width));
        if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
            lin->weight_prior.validate();
            if (lin->weight_prior.shape != std::vector<std::size_t>{lin->out, lin->in})
                throw std::invalid_argument("architecture: linear weight prior shape mismatch");
            if (lin->bias_prior) {
                lin->bias_prior->validate();
                if (lin->bias_prior->shape != std::vector<std::size_t>{lin->out})
                    throw std::invalid_argument("architecture: bias prior shape mismatch");
            }
            if (lin->deterministic_weight &&
                (!lin->fixed_weight || lin->fixed_weight->rows() != lin->out ||
                 lin->fixed_weight->cols() != lin->in))
                throw std::invalid_argument(
                    "architecture: deterministic linear layer needs a fixed weight of matching "
                    "shape");
        } else if (const auto* t = std::get_if<TLayer>(&layer)) {
            if (t->weight.rows() != t->out || t->weight.cols() != t->in)
                throw std::invalid_argument("architecture: t-layer weight shape mismatch");
        } else if (const auto* act = std::get_if<ActivationLayer>(&layer)) {
            if (act->kind == Activation::ExpNormalized &&
                (act->d == 0 || act->sigma_w <= 0.0))
                throw std::invalid_argument(
                    "architecture: exp-normalized activation requires its (sigma_b, sigma_w, d) "
                    "normalization constants");
        } else if (std::get_if<ComplexLinearLayer>(&layer)) {
            if (field != FieldType::Complex)
                throw std::invalid_argument(
                    "architecture: complex layer in a real-valued network");
            if (li + 1 != layers.size())
                throw std::invalid_argument(
                    "architecture: complex layer allowed only as the output layer");
        }
        width = layer_out(layer, width);
    }
    if (width != output_dim)
        throw std::invalid_argument("architecture: final layer out-dim " + std::to_string(width) +
                                    " != output dim " + std::to_string(output_dim));
    if (field == FieldType::Complex &&
        !std::holds_alternative<ComplexLinearLayer>(layers.back()))
        throw std::invalid_argument(
            "architecture: complex field requires a complex output layer");
}

// ---------------------------------------------------------------------------
// Metropolis chain for the quartic-invariant prior
// ---------------------------------------------------------------------------

QuarticChain::QuarticChain(const QuarticInvariantPrior& prior, std::size_t entries,
                           RngStream rng, MetropolisOptions opts)
    : prior_(prior), opts_(opts), rng_(rng) {
    if (!(prior.stddev > 0.0)) throw std::invalid_argument("quartic chain: stddev must be > 0");
    if (prior.lambda < 0.0) throw std::invalid_argument("quartic chain: lambda must be >= 0");
    state_.assign(entries, 0.0);
    proposal_.resize(entries);
    // Start from the Gaussian part of the density.
    for (double& v : state_) v = rng_.normal(0.0, prior.stddev);
    trace_sq_ = 0.0;
    for (double v : state_) trace_sq_ += v * v;
    step_scale_ = 2.4 * prior.stddev / std::sqrt(static_cast<double>(entries));

    for (std::size_t i = 0; i < opts_.burn_in; ++i) step();
    frozen_ = true;
}

MetropolisStats QuarticChain::stats() const {
    MetropolisStats s;
    s.step_scale = step_scale_;
    s.proposals = post_proposals_;
    s.acceptance_rate = post_proposals_ > 0
                            ? static_cast<double>(post_accepted_) / post_proposals_
                            : 0.0;
    return s;
}

void QuarticChain::step() {
    double trace_new = 0.0;
    for (std::size_t i = 0; i < state_.size(); ++i) {
        proposal_[i] = state_[i] + step_scale_ * rng_.normal();
        trace_new += proposal_[i] * proposal_[i];
    }
    const double inv2s2 = 1.0 / (2.0 * prior_.stddev * prior_.stddev);
    const double log_p_new = -trace_new * inv2s2 - prior_.lambda * trace_new * trace_new;
    const double log_p_old = -trace_sq_ * inv2s2 - prior_.lambda * trace_sq_ * trace_sq_;
    bool accept = std::log(rng_.uniform_open()) < log_p_new - log_p_old;
    if (accept) {
        std::swap(state_, proposal_);
        trace_sq_ = trace_new;
    }

    if (!frozen_) {
        if (accept) ++accepted_since_adapt_;
        if (++proposals_since_adapt_ >= 200) {
            const double rate =
                static_cast<double>(accepted_since_adapt_) / proposals_since_adapt_;
            if (rate > opts_.target_acceptance + 0.1) step_scale_ *= 1.3;
            if (rate < opts_.target_acceptance - 0.1) step_scale_ /= 1.3;
            accepted_since_adapt_ = 0;
            proposals_since_adapt_ = 0;
        }
    } else {
        ++post_proposals_;
        if (accept) ++post_accepted_;
    }
}

std::span<const double> QuarticChain::next() {
    for (std::size_t i = 0; i < std::max<std::size_t>(1, opts_.thinning); ++i) step();
    return state_;
}

MetropolisSample metropolis_sample(const QuarticInvariantPrior& prior,
                                   std::span<const std::size_t> shape, std::size_t count,
                                   RngStream rng, MetropolisOptions opts) {
    const std::size_t entries = shape_product(shape);
    if (entries == 0) throw std::invalid_argument("metropolis_sample: empty shape");
    QuarticChain chain(prior, entries, rng, opts);
    MetropolisSample out;
    out.draws.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto s = chain.next();
        out.draws.emplace_back(s.begin(), s.end());
    }
    out.stats = chain.stats();
    return out;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

namespace {

void sample_gaussian(std::span<double> dst, const GaussianPrior& g, RngStream& rng) {
    for (double& v : dst) v = g.mean + g.stddev * rng.normal();
}

void sample_uniform_circle(std::span<double> dst, RngStream& rng) {
    for (double& v : dst) v = rng.uniform();
}

}  // namespace

NetworkSampler::NetworkSampler(const ArchitectureSpec& spec, RngStream rng,
                               MetropolisOptions opts)
    : spec_(&spec), rng_(rng), opts_(opts) {
    spec.validate();
    draw_.spec = spec_;
    draw_.layers.resize(spec.layers.size());
    weight_chains_.resize(spec.layers.size());
    bias_chains_.resize(spec.layers.size());

    std::size_t chain_id = 1000;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        LayerParams& p = draw_.layers[li];
        if (const auto* lin = std::get_if<LinearLayer>(&spec.layers[li])) {
            p.weight = RMatrix(lin->out, lin->in);
            if (lin->deterministic_weight) p.weight = *lin->fixed_weight;
            if (lin->bias_prior) p.bias.assign(lin->out, 0.0);
            if (const auto* q = std::get_if<QuarticInvariantPrior>(&lin->weight_prior.kind);
                q && !lin->deterministic_weight)
                weight_chains_[li].emplace(*q, lin->out * lin->in, rng_.spawn(chain_id++),
                                           opts_);
            if (lin->bias_prior)
                if (const auto* qb = std::get_if<QuarticInvariantPrior>(&lin->bias_prior->kind))
                    bias_chains_[li].emplace(*qb, lin->out, rng_.spawn(chain_id++), opts_);
        } else if (const auto* t = std::get_if<TLayer>(&spec.layers[li])) {
            p.weight = t->weight;
            p.bias.assign(t->out, 0.0);
        } else if (const auto* c = std::get_if<ComplexLinearLayer>(&spec.layers[li])) {
            p.cweight = CMatrix(c->out, c->in);
            if (c->bias_std) p.cbias.assign(c->out, cplx{});
        }
    }
}

const NetworkDraw& NetworkSampler::next() {
    const ArchitectureSpec& spec = *spec_;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        LayerParams& p = draw_.layers[li];
        if (const auto* lin = std::get_if<LinearLayer>(&spec.layers[li])) {
            if (!lin->deterministic_weight) {
                if (weight_chains_[li]) {
                    auto s = weight_chains_[li]->next();
                    std::copy(s.begin(), s.end(), p.weight.data().begin());
                } else if (const auto* g = std::get_if<GaussianPrior>(&lin->weight_prior.kind)) {
                    sample_gaussian(p.weight.data(), *g, rng_);
                } else {
                    throw std::invalid_argument(
                        "sample_network: uniform-circle prior unsupported for linear weights");
                }
            }
            if (lin->bias_prior) {
                if (bias_chains_[li]) {
                    auto s = bias_chains_[li]->next();
                    std::copy(s.begin(), s.end(), p.bias.begin());
                } else if (const auto* g = std::get_if<GaussianPrior>(&lin->bias_prior->kind)) {
                    sample_gaussian(p.bias, *g, rng_);
                } else {
                    sample_uniform_circle(p.bias, rng_);
                }
            }
        } else if (std::get_if<TLayer>(&spec.layers[li])) {
            sample_uniform_circle(p.bias, rng_);
        } else if (const auto* c = std::get_if<ComplexLinearLayer>(&spec.layers[li])) {
            for (cplx& w : p.cweight.data()) {
                const double re = rng_.normal(0.0, c->weight_std);
                const double im = rng_.normal(0.0, c->weight_std);
                w = cplx(re, im);
            }
            if (c->bias_std)
                for (cplx& b : p.cbias) {
                    const double re = rng_.normal(0.0, *c->bias_std);
                    const double im = rng_.normal(0.0, *c->bias_std);
                    b = cplx(re, im);
                }
        }
    }
    return draw_;
}

NetworkDraw sample_network(const ArchitectureSpec& spec, RngStream& rng,
                           MetropolisOptions opts) {
    // Advance the caller's stream by one word so successive calls decorrelate.
    NetworkSampler sampler(spec, rng.spawn(rng.next_u64()), opts);
    return sampler.next();
}

// ---------------------------------------------------------------------------
// Forward evaluation
// ---------------------------------------------------------------------------

namespace {

void apply_linear(const LinearLayer& lin, const LayerParams& p, std::span<const double> x,
                  std::vector<double>& out) {
    out.assign(lin.out, 0.0);
    for (std::size_t i = 0; i < lin.out; ++i) {
        double acc = 0.0;
        const double* row = p.weight.data().data() + i * lin.in;
        for (std::size_t j = 0; j < lin.in; ++j) acc += row[j] * x[j];
        if (!p.bias.empty()) acc += p.bias[i];
        out[i] = lin.scale == 1.0 ? acc : lin.scale * acc;
    }
}

void apply_t_layer(const TLayer& t, const LayerParams& p, std::span<const double> x,
                   std::vector<double>& out) {
    out.assign(t.out, 0.0);
    for (std::size_t i = 0; i < t.out; ++i) {
        double acc = 0.0;
        const double* row = p.weight.data().data() + i * t.in;
        for (std::size_t j = 0; j < t.in; ++j) acc += row[j] * x[j];
        out[i] = positive_mod1(positive_mod1(acc) + p.bias[i]);
    }
}

void apply_activation(const ActivationLayer& act, std::span<const double> x,
                      std::vector<double>& out) {
    out.assign(x.begin(), x.end());
    if (act.kind == Activation::Relu) {
        for (double& v : out) v = v > 0.0 ? v : 0.0;
    } else {
        const double norm = std::sqrt(std::exp(
            2.0 * (act.sigma_b * act.sigma_b +
                   act.sigma_w * act.sigma_w / static_cast<double>(act.d))));
        for (double& v : out) v = std::exp(v) / norm;
    }
}

}  // namespace

void forward(const NetworkDraw& net, std::span<const double> x, ForwardWorkspace& ws,
             std::vector<double>& out) {
    const ArchitectureSpec& spec = *net.spec;
    if (x.size() != spec.input_dim)
        throw std::invalid_argument("forward: input length " + std::to_string(x.size()) +
                                    " != input dim " + std::to_string(spec.input_dim));
    if (spec.field != FieldType::Real)
        throw std::invalid_argument("forward: complex network, use forward_complex");

    ws.a.assign(x.begin(), x.end());
    std::vector<double>* cur = &ws.a;
    std::vector<double>* nxt = &ws.b;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const LayerParams& p = net.layers[li];
        if (const auto* lin = std::get_if<LinearLayer>(&spec.layers[li]))
            apply_linear(*lin, p, *cur, *nxt);
        else if (const auto* t = std::get_if<TLayer>(&spec.layers[li]))
            apply_t_layer(*t, p, *cur, *nxt);
        else if (const auto* act = std::get_if<ActivationLayer>(&spec.layers[li]))
            apply_activation(*act, *cur, *nxt);
        std::swap(cur, nxt);
    }
    out = *cur;
}

std::vector<double> forward(const NetworkDraw& net, std::span<const double> x) {
    ForwardWorkspace ws;
    std::vector<double> out;
    forward(net, x, ws, out);
    return out;
}

void forward_complex(const NetworkDraw& net, std::span<const double> x, ForwardWorkspace& ws,
                     std::vector<cplx>& out) {
    const ArchitectureSpec& spec = *net.spec;
    if (spec.field != FieldType::Complex)
        throw std::invalid_argument("forward_complex: network is real-valued");
    if (x.size() != spec.input_dim)
        throw std::invalid_argument("forward_complex: input length mismatch");

    // Real hidden stack, complex final layer.
    ws.a.assign(x.begin(), x.end());
    std::vector<double>* cur = &ws.a;
    std::vector<double>* nxt = &ws.b;
    for (std::size_t li = 0; li + 1 < spec.layers.size(); ++li) {
        const LayerParams& p = net.layers[li];
        if (const auto* lin = std::get_if<LinearLayer>(&spec.layers[li]))
            apply_linear(*lin, p, *cur, *nxt);
        else if (const auto* t = std::get_if<TLayer>(&spec.layers[li]))
            apply_t_layer(*t, p, *cur, *nxt);
        else if (const auto* act = std::get_if<ActivationLayer>(&spec.layers[li]))
            apply_activation(*act, *cur, *nxt);
        std::swap(cur, nxt);
    }
    const auto& c = std::get<ComplexLinearLayer>(spec.layers.back());
    const LayerParams& p = net.layers.back();
    out.assign(c.out, cplx{});
    for (std::size_t i = 0; i < c.out; ++i) {
        cplx acc{};
        for (std::size_t j = 0; j < c.in; ++j) acc += p.cweight(i, j) * (*cur)[j];
        if (!p.cbias.empty()) acc += p.cbias[i];
        out[i] = acc;
    }
}

std::vector<cplx> forward_complex(const NetworkDraw& net, std::span<const double> x) {
    ForwardWorkspace ws;
    std::vector<cplx> out;
    forward_complex(net, x, ws, out);
    return out;
}

std::vector<double> hidden_activation(const NetworkDraw& net, std::span<const double> x) {
    const ArchitectureSpec& spec = *net.spec;
    if (spec.layers.size() < 2)
        throw std::invalid_argument("hidden_activation: network has no hidden stack");
    ForwardWorkspace ws;
    ws.a.assign(x.begin(), x.end());
    std::vector<double>* cur = &ws.a;
    std::vector<double>* nxt = &ws.b;
    for (std::size_t li = 0; li + 1 < spec.layers.size(); ++li) {
        const LayerParams& p = net.layers[li];
        if (const auto* lin = std::get_if<LinearLayer>(&spec.layers[li]))
            apply_linear(*lin, p, *cur, *nxt);
        else if (const auto* t = std::get_if<TLayer>(&spec.layers[li]))
            apply_t_layer(*t, p, *cur, *nxt);
        else if (const auto* act = std::get_if<ActivationLayer>(&spec.layers[li]))
            apply_activation(*act, *cur, *nxt);
        std::swap(cur, nxt);
    }
    return *cur;
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

ArchitectureSpec gauss_net(std::size_t d, std::size_t n, std::size_t out_dim, double sigma_w,
                           double sigma_b) {
    ArchitectureSpec spec;
    spec.input_dim = d;
    spec.output_dim = out_dim;

    LinearLayer l0;
    l0.in = d;
    l0.out = n;
    l0.weight_prior = {GaussianPrior{0.0, sigma_w / std::sqrt(static_cast<double>(d))},
                       {n, d}};
    l0.bias_prior = ParameterPrior{GaussianPrior{0.0, sigma_b}, {n}};

    ActivationLayer act;
    act.kind = Activation::ExpNormalized;
    act.sigma_b = sigma_b;
    act.sigma_w = sigma_w;
    act.d = d;

    LinearLayer l1;
    l1.in = n;
    l1.out = out_dim;
    l1.weight_prior = {GaussianPrior{0.0, sigma_w / std::sqrt(static_cast<double>(n))},
                       {out_dim, n}};
    l1.bias_prior = ParameterPrior{GaussianPrior{0.0, sigma_b}, {out_dim}};

    spec.layers = {l0, act, l1};
    spec.validate();
    return spec;
}

ArchitectureSpec relu_net(std::size_t d, std::size_t n, std::size_t out_dim, double w0_std,
                          double w1_std, double output_scale) {
    ArchitectureSpec spec;
    spec.input_dim = d;
    spec.output_dim = out_dim;

    LinearLayer l0;
    l0.in = d;
    l0.out = n;
    l0.weight_prior = {GaussianPrior{0.0, w0_std}, {n, d}};

    ActivationLayer act;
    act.kind = Activation::Relu;

    LinearLayer l1;
    l1.in = n;
    l1.out = out_dim;
    l1.weight_prior = {GaussianPrior{0.0, w1_std}, {out_dim, n}};
    l1.scale = output_scale;

    spec.layers = {l0, act, l1};
    spec.validate();
    return spec;
}

ArchitectureSpec linear_net(std::size_t d, std::size_t out_dim, double mean, double stddev) {
    ArchitectureSpec spec;
    spec.input_dim = d;
    spec.output_dim = out_dim;
    LinearLayer l;
    l.in = d;
    l.out = out_dim;
    l.weight_prior = {GaussianPrior{mean, stddev}, {out_dim, d}};
    spec.layers = {l};
    spec.validate();
    return spec;
}

ArchitectureSpec t_layer_net(const RMatrix& t_weight, std::size_t n, std::size_t out_dim,
                             double w_std, double v_std) {
    ArchitectureSpec spec;
    spec.input_dim = t_weight.cols();
    spec.output_dim = out_dim;

    TLayer t;
    t.in = t_weight.cols();
    t.out = t_weight.rows();
    t.weight = t_weight;

    LinearLayer l0;
    l0.in = t.out;
    l0.out = n;
    l0.weight_prior = {GaussianPrior{0.0, w_std}, {n, t.out}};

    ActivationLayer act;
    act.kind = Activation::Relu;

    LinearLayer l1;
    l1.in = n;
    l1.out = out_dim;
    l1.weight_prior = {GaussianPrior{0.0, v_std}, {out_dim, n}};

    spec.layers = {t, l0, act, l1};
    spec.validate();
    return spec;
}

ArchitectureSpec complex_output_net(std::size_t d, std::size_t n, std::size_t out_dim,
                                    double w0_std, double wout_std) {
    ArchitectureSpec spec;
    spec.input_dim = d;
    spec.output_dim = out_dim;
    spec.field = FieldType::Complex;

    LinearLayer l0;
    l0.in = d;
    l0.out = n;
    l0.weight_prior = {GaussianPrior{0.0, w0_std}, {n, d}};

    ActivationLayer act;
    act.kind = Activation::Relu;

    ComplexLinearLayer out;
    out.in = n;
    out.out = out_dim;
    out.weight_std = wout_std;

    spec.layers = {l0, act, out};
    spec.validate();
    return spec;
}

}  // namespace nnsym
