#include "nnsym/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

#include "nnsym/workers.hpp"

namespace nnsym {

void Dataset::validate() const {
    if (feature_dim == 0) throw std::invalid_argument("dataset: zero feature dimension");
    if (labels.empty()) throw std::invalid_argument("dataset: empty");
    if (features.size() != labels.size() * feature_dim)
        throw std::invalid_argument("dataset: feature/label count mismatch");
}

void TrainingConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("training config: bad learning rate");
    if (batch_size < 1) throw std::invalid_argument("training config: batch size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("training config: epochs must be >= 1");
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

Dataset make_blobs(const BlobParams& params, std::size_t per_class, std::uint64_t sample_seed) {
    RngStream center_rng(params.seed, 101);
    std::vector<double> centers(params.classes * params.dim);
    for (double& c : centers) c = center_rng.uniform(params.center_lo, params.center_hi);

    Dataset out;
    out.feature_dim = params.dim;
    out.features.reserve(params.classes * per_class * params.dim);
    out.labels.reserve(params.classes * per_class);
    RngStream rng(sample_seed, 202);
    for (std::size_t c = 0; c < params.classes; ++c)
        for (std::size_t s = 0; s < per_class; ++s) {
            for (std::size_t j = 0; j < params.dim; ++j) {
                double v = centers[c * params.dim + j] + params.noise * rng.normal();
                out.features.push_back(std::clamp(v, 0.0, 1.0));
            }
            out.labels.push_back(static_cast<std::uint8_t>(c));
        }
    return out;
}

Dataset make_two_blobs(std::size_t per_class, std::uint64_t sample_seed) {
    Dataset out;
    out.feature_dim = 2;
    RngStream rng(sample_seed, 303);
    // Centers differ in direction from the origin, so bias-free relu nets
    // (positively homogeneous) can separate them.
    const double centers[2][2] = {{0.25, 0.75}, {0.75, 0.25}};
    const double noise = 0.08;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t s = 0; s < per_class; ++s) {
            for (std::size_t j = 0; j < 2; ++j)
                out.features.push_back(
                    std::clamp(centers[c][j] + noise * rng.normal(), 0.0, 1.0));
            out.labels.push_back(static_cast<std::uint8_t>(c));
        }
    return out;
}

double nearest_mean_accuracy(const Dataset& train, const Dataset& test) {
    train.validate();
    test.validate();
    const std::size_t d = train.feature_dim;
    std::size_t classes = 0;
    for (auto l : train.labels) classes = std::max<std::size_t>(classes, l + 1);
    std::vector<double> means(classes * d, 0.0);
    std::vector<std::size_t> counts(classes, 0);
    for (std::size_t i = 0; i < train.size(); ++i) {
        auto row = train.row(i);
        for (std::size_t j = 0; j < d; ++j) means[train.labels[i] * d + j] += row[j];
        ++counts[train.labels[i]];
    }
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t j = 0; j < d; ++j)
            if (counts[c] > 0) means[c * d + j] /= static_cast<double>(counts[c]);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        auto row = test.row(i);
        std::size_t best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < classes; ++c) {
            double dist = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = row[j] - means[c * d + j];
                dist += diff * diff;
            }
            if (dist < best_dist) {
                best_dist = dist;
                best = c;
            }
        }
        if (best == test.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

// ---------------------------------------------------------------------------
// Backprop machinery
// ---------------------------------------------------------------------------

namespace {

struct ParamGrads {
    std::vector<std::vector<double>> w;  // empty for deterministic weights
    std::vector<std::vector<double>> b;

    void init(const ArchitectureSpec& spec) {
        w.assign(spec.layers.size(), {});
        b.assign(spec.layers.size(), {});
        for (std::size_t li = 0; li < spec.layers.size(); ++li) {
            if (const auto* lin = std::get_if<LinearLayer>(&spec.layers[li])) {
                if (!lin->deterministic_weight) w[li].assign(lin->out * lin->in, 0.0);
                if (lin->bias_prior) b[li].assign(lin->out, 0.0);
            } else if (const auto* t = std::get_if<TLayer>(&spec.layers[li])) {
                b[li].assign(t->out, 0.0);
            } else if (std::get_if<ComplexLinearLayer>(&spec.layers[li])) {
                throw std::invalid_argument("training: complex layers are not trainable");
            }
        }
    }
    void zero() {
        for (auto& g : w) std::fill(g.begin(), g.end(), 0.0);
        for (auto& g : b) std::fill(g.begin(), g.end(), 0.0);
    }
    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& g : w) n += g.size();
        for (const auto& g : b) n += g.size();
        return n;
    }
};

double positive_mod1(double v) {
    double r = v - std::floor(v);
    return r < 1.0 ? r : 0.0;
}

bool is_integer(double v) { return v == std::floor(v); }

// Forward pass keeping each layer's input; acts[li] is the input of layer li,
// acts.back() the network output. Flags integer t-layer mod arguments.
void forward_cached(const NetworkDraw& net, std::span<const double> x,
                    std::vector<std::vector<double>>& acts, bool* integer_input = nullptr) {
    const ArchitectureSpec& spec = *net.spec;
    if (x.size() != spec.input_dim)
        throw std::invalid_argument("forward_cached: input dimension mismatch");
    acts.resize(spec.layers.size() + 1);
    acts[0].assign(x.begin(), x.end());
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const LayerParams& p = net.layers[li];
        const auto& in = acts[li];
        auto& out = acts[li + 1];
        if (const auto* lin = std::get_if<LinearLayer>(&spec.layers[li])) {
            out.assign(lin->out, 0.0);
            for (std::size_t i = 0; i < lin->out; ++i) {
                double acc = 0.0;
                const double* row = p.weight.data().data() + i * lin->in;
                for (std::size_t j = 0; j < lin->in; ++j) acc += row[j] * in[j];
                if (!p.bias.empty()) acc += p.bias[i];
                out[i] = lin->scale * acc;
            }
        } else if (const auto* t = std::get_if<TLayer>(&spec.layers[li])) {
            out.assign(t->out, 0.0);
            for (std::size_t i = 0; i < t->out; ++i) {
                double acc = 0.0;
                const double* row = p.weight.data().data() + i * t->in;
                for (std::size_t j = 0; j < t->in; ++j) acc += row[j] * in[j];
                if (integer_input && (is_integer(acc) || is_integer(positive_mod1(acc) + p.bias[i])))
                    *integer_input = true;
                out[i] = positive_mod1(positive_mod1(acc) + p.bias[i]);
            }
        } else if (const auto* act = std::get_if<ActivationLayer>(&spec.layers[li])) {
            out.assign(in.begin(), in.end());
            if (act->kind == Activation::Relu) {
                for (double& v : out) v = v > 0.0 ? v : 0.0;
            } else {
                const double norm = std::sqrt(std::exp(
                    2.0 * (act->sigma_b * act->sigma_b +
                           act->sigma_w * act->sigma_w / static_cast<double>(act->d))));
                for (double& v : out) v = std::exp(v) / norm;
            }
        }
    }
}

// Accumulates parameter gradients for one sample; dout = dL/d(output).
void backprop(const NetworkDraw& net, const std::vector<std::vector<double>>& acts,
              std::vector<double> delta, ParamGrads& grads) {
    const ArchitectureSpec& spec = *net.spec;
    std::vector<double> next_delta;
    for (std::size_t li = spec.layers.size(); li-- > 0;) {
        const LayerParams& p = net.layers[li];
        const auto& in = acts[li];
        if (const auto* lin = std::get_if<LinearLayer>(&spec.layers[li])) {
            if (!lin->deterministic_weight) {
                auto& gw = grads.w[li];
                for (std::size_t i = 0; i < lin->out; ++i) {
                    const double di = lin->scale * delta[i];
                    double* grow = gw.data() + i * lin->in;
                    for (std::size_t j = 0; j < lin->in; ++j) grow[j] += di * in[j];
                }
            }
            if (!grads.b[li].empty())
                for (std::size_t i = 0; i < lin->out; ++i)
                    grads.b[li][i] += lin->scale * delta[i];
            next_delta.assign(lin->in, 0.0);
            for (std::size_t i = 0; i < lin->out; ++i) {
                const double di = lin->scale * delta[i];
                const double* row = p.weight.data().data() + i * lin->in;
                for (std::size_t j = 0; j < lin->in; ++j) next_delta[j] += di * row[j];
            }
            delta = next_delta;
        } else if (const auto* t = std::get_if<TLayer>(&spec.layers[li])) {
            // mod treated as the identity for gradients
            for (std::size_t i = 0; i < t->out; ++i) grads.b[li][i] += delta[i];
            next_delta.assign(t->in, 0.0);
            for (std::size_t i = 0; i < t->out; ++i) {
                const double* row = p.weight.data().data() + i * t->in;
                for (std::size_t j = 0; j < t->in; ++j) next_delta[j] += delta[i] * row[j];
            }
            delta = next_delta;
        } else if (const auto* act = std::get_if<ActivationLayer>(&spec.layers[li])) {
            if (act->kind == Activation::Relu) {
                for (std::size_t j = 0; j < delta.size(); ++j)
                    if (!(in[j] > 0.0)) delta[j] = 0.0;  // relu'(0) = 0
            } else {
                const auto& out = acts[li + 1];
                for (std::size_t j = 0; j < delta.size(); ++j) delta[j] *= out[j];
            }
        }
    }
}

void apply_update(NetworkDraw& net, const ParamGrads& grads, double step) {
    const ArchitectureSpec& spec = *net.spec;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        LayerParams& p = net.layers[li];
        if (!grads.w[li].empty()) {
            auto w = p.weight.data();
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * grads.w[li][i];
        }
        if (!grads.b[li].empty())
            for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias[i] -= step * grads.b[li][i];
    }
}

void fisher_yates(std::vector<std::size_t>& idx, RngStream& rng) {
    for (std::size_t i = idx.size(); i-- > 1;) {
        const std::size_t j = rng.next_u64() % (i + 1);
        std::swap(idx[i], idx[j]);
    }
}

double evaluate_accuracy(const NetworkDraw& net, const Dataset& test, LabelEncoding enc) {
    ForwardWorkspace ws;
    std::vector<double> out;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        forward(net, test.row(i), ws, out);
        if (decode_output(out, enc) == test.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace

std::vector<double> encode_label(std::uint8_t label, std::size_t classes, LabelEncoding enc) {
    if (label >= classes) throw std::invalid_argument("encode_label: label out of range");
    std::vector<double> y(classes, enc == LabelEncoding::OneHot ? 0.0 : 1.0);
    y[label] = enc == LabelEncoding::OneHot ? 1.0 : 0.0;
    return y;
}

std::size_t decode_output(std::span<const double> out, LabelEncoding enc) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (enc == LabelEncoding::OneHot ? out[i] > out[best] : out[i] < out[best]) best = i;
    }
    return best;
}

NetworkDraw breaking_init(const ArchitectureSpec& spec, std::size_t k, double mu_w,
                          RngStream& rng) {
    spec.validate();
    const auto* lin = std::get_if<LinearLayer>(&spec.layers.back());
    if (!lin || lin->bias_prior)
        throw std::invalid_argument("breaking_init: final layer must be linear with no bias");
    if (k > spec.output_dim)
        throw std::invalid_argument("breaking_init: k must be between 0 and the output dim");
    NetworkDraw net = sample_network(spec, rng);
    RMatrix& w = net.layers.back().weight;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) w(i, j) += mu_w;
    return net;
}

TrainResult sgd_train(NetworkDraw net, const Dataset& train, const Dataset& test,
                      const TrainingConfig& config) {
    config.validate();
    train.validate();
    test.validate();
    const ArchitectureSpec& spec = *net.spec;
    if (train.feature_dim != spec.input_dim)
        throw std::invalid_argument("sgd_train: dataset feature dim != network input dim");
    for (double v : train.features)
        if (v < 0.0 || v > 1.0)
            throw std::invalid_argument("sgd_train: features must be normalized to [0,1]");

    TrainResult result;
    result.net = std::move(net);

    ParamGrads grads;
    grads.init(spec);
    std::vector<std::vector<double>> acts;
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngStream shuffle_rng(config.seed, 7777);

    const std::size_t classes = spec.output_dim;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        fisher_yates(order, shuffle_rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            grads.zero();
            double batch_loss = 0.0;
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t i = order[b];
                forward_cached(result.net, train.row(i), acts);
                const auto& out = acts.back();
                const auto y = encode_label(train.labels[i], classes, config.encoder);
                std::vector<double> dout(classes);
                if (config.loss == LossKind::Mse) {
                    double loss = 0.0;
                    for (std::size_t c = 0; c < classes; ++c) {
                        const double diff = out[c] - y[c];
                        loss += diff * diff;
                        dout[c] = 2.0 * diff;
                    }
                    batch_loss += loss;
                } else {
                    double ff = 0.0, yy = 0.0;
                    for (std::size_t c = 0; c < classes; ++c) {
                        ff += out[c] * out[c];
                        yy += y[c] * y[c];
                        dout[c] = 2.0 * out[c];
                    }
                    batch_loss += ff - yy;
                }
                backprop(result.net, acts, std::move(dout), grads);
            }
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("sgd_train: non-finite loss at epoch " +
                                         std::to_string(epoch + 1) + ", batch starting at " +
                                         std::to_string(start));
            apply_update(result.net, grads,
                         config.learning_rate / static_cast<double>(stop - start));
            epoch_loss += batch_loss;
        }
        EpochMetrics m;
        m.epoch = epoch + 1;
        m.train_loss = epoch_loss / static_cast<double>(train.size());
        m.test_accuracy = evaluate_accuracy(result.net, test, config.encoder);
        result.metrics.push_back(m);
        result.max_test_accuracy = std::max(result.max_test_accuracy, m.test_accuracy);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Grid experiments
// ---------------------------------------------------------------------------

std::vector<TrainGridCell> train_grid(const ArchitectureSpec& spec, const Dataset& train,
                                      const Dataset& test, std::span<const std::size_t> k_grid,
                                      std::span<const double> mu_grid,
                                      std::span<const std::uint64_t> seeds,
                                      const TrainingConfig& config, int workers) {
    if (k_grid.empty() || mu_grid.empty() || seeds.empty())
        throw std::invalid_argument("train_grid: empty grid");
    struct Run {
        std::size_t cell;
        std::size_t seed_index;
    };
    std::vector<TrainGridCell> cells;
    std::vector<Run> runs;
    for (std::size_t ki = 0; ki < k_grid.size(); ++ki)
        for (std::size_t mi = 0; mi < mu_grid.size(); ++mi) {
            TrainGridCell cell;
            cell.k = k_grid[ki];
            cell.mu_w = mu_grid[mi];
            cell.per_seed.assign(seeds.size(), 0.0);
            cell.per_seed_metrics.resize(seeds.size());
            cell.seeds.assign(seeds.begin(), seeds.end());
            for (std::size_t si = 0; si < seeds.size(); ++si)
                runs.push_back(Run{cells.size(), si});
            cells.push_back(std::move(cell));
        }

    std::atomic<std::size_t> cursor{0};
    detail::run_workers(static_cast<std::size_t>(std::max(1, workers)), [&](std::size_t) {
        for (;;) {
            const std::size_t r = cursor.fetch_add(1);
            if (r >= runs.size()) return;
            const Run& run = runs[r];
            TrainGridCell& cell = cells[run.cell];
            TrainingConfig cfg = config;
            cfg.seed = cell.seeds[run.seed_index];
            RngStream init_rng(cfg.seed, 555);
            NetworkDraw net = breaking_init(spec, cell.k, cell.mu_w, init_rng);
            TrainResult res = sgd_train(std::move(net), train, test, cfg);
            cell.per_seed[run.seed_index] = res.max_test_accuracy;
            cell.per_seed_metrics[run.seed_index] = std::move(res.metrics);
        }
    });

    for (auto& cell : cells) {
        double acc = 0.0;
        for (double a : cell.per_seed) acc += a;
        cell.mean_max_accuracy = acc / static_cast<double>(cell.per_seed.size());
        double ss = 0.0;
        for (double a : cell.per_seed) {
            const double d = a - cell.mean_max_accuracy;
            ss += d * d;
        }
        cell.stddev_accuracy =
            cell.per_seed.size() > 1
                ? std::sqrt(ss / static_cast<double>(cell.per_seed.size() - 1))
                : 0.0;
    }
    return cells;
}

std::vector<TrainGridCell> one_cold_experiment(const ArchitectureSpec& spec,
                                               const Dataset& train, const Dataset& test,
                                               std::span<const double> mu_grid,
                                               std::span<const std::uint64_t> seeds,
                                               TrainingConfig config, int workers) {
    config.encoder = LabelEncoding::OneCold;
    const std::size_t k_full[1] = {spec.output_dim};  // complete breaking, k = D
    return train_grid(spec, train, test, k_full, mu_grid, seeds, config, workers);
}

double mean_hidden_activation(const ArchitectureSpec& spec, const Dataset& data,
                              std::size_t draws, std::size_t rows, RngStream rng) {
    NetworkSampler sampler(spec, rng);
    double acc = 0.0;
    std::size_t count = 0;
    const std::size_t use_rows = std::min(rows, data.size());
    for (std::size_t s = 0; s < draws; ++s) {
        const NetworkDraw& net = sampler.next();
        for (std::size_t r = 0; r < use_rows; ++r) {
            const auto g = hidden_activation(net, data.row(r));
            for (double v : g) acc += v;
            count += g.size();
        }
    }
    return acc / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// NTK
// ---------------------------------------------------------------------------

RMatrix output_jacobian(const NetworkDraw& net, std::span<const double> x) {
    const ArchitectureSpec& spec = *net.spec;
    std::vector<std::vector<double>> acts;
    forward_cached(net, x, acts);
    ParamGrads grads;
    grads.init(spec);
    const std::size_t params = grads.total();
    RMatrix jac(spec.output_dim, params);
    for (std::size_t i = 0; i < spec.output_dim; ++i) {
        grads.zero();
        std::vector<double> seed(spec.output_dim, 0.0);
        seed[i] = 1.0;
        backprop(net, acts, std::move(seed), grads);
        std::size_t col = 0;
        for (const auto& g : grads.w)
            for (double v : g) jac(i, col++) = v;
        for (const auto& g : grads.b)
            for (double v : g) jac(i, col++) = v;
    }
    return jac;
}

NTKTensor empirical_ntk(const NetworkDraw& net, std::span<const double> x,
                        std::span<const double> xp) {
    const ArchitectureSpec& spec = *net.spec;
    NTKTensor out;
    std::vector<std::vector<double>> acts;
    bool flagged = false;
    forward_cached(net, x, acts, &flagged);
    forward_cached(net, xp, acts, &flagged);
    out.nondifferentiable = flagged;

    const RMatrix jx = output_jacobian(net, x);
    const RMatrix jxp = output_jacobian(net, xp);
    out.theta = RMatrix(spec.output_dim, spec.output_dim);
    for (std::size_t i = 0; i < spec.output_dim; ++i)
        for (std::size_t j = 0; j < spec.output_dim; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < jx.cols(); ++p) acc += jx(i, p) * jxp(j, p);
            out.theta(i, j) = acc;
        }
    return out;
}

EnsembleNTK ensemble_ntk(const ArchitectureSpec& spec, std::span<const double> x,
                         std::span<const double> xp, std::size_t samples, RngStream rng,
                         int workers) {
    if (samples < 2) throw std::invalid_argument("ensemble_ntk: need at least 2 samples");
    const std::size_t d_out = spec.output_dim;
    const std::size_t entries = d_out * d_out;
    const std::size_t w_count = static_cast<std::size_t>(std::max(1, workers));

    struct Partial {
        std::vector<double> sum, sum_sq;
    };
    std::vector<Partial> partials(w_count);
    std::vector<double> xv(x.begin(), x.end()), xpv(xp.begin(), xp.end());
    detail::run_workers(w_count, [&](std::size_t w) {
        const std::size_t lo = samples * w / w_count;
        const std::size_t hi = samples * (w + 1) / w_count;
        Partial& part = partials[w];
        part.sum.assign(entries, 0.0);
        part.sum_sq.assign(entries, 0.0);
        NetworkSampler sampler(spec, rng.spawn(w));
        for (std::size_t s = lo; s < hi; ++s) {
            const NetworkDraw& net = sampler.next();
            const NTKTensor t = empirical_ntk(net, xv, xpv);
            for (std::size_t i = 0; i < entries; ++i) {
                const double v = t.theta.data()[i];
                part.sum[i] += v;
                part.sum_sq[i] += v * v;
            }
        }
    });

    EnsembleNTK out;
    out.mean = RMatrix(d_out, d_out);
    out.std_error = RMatrix(d_out, d_out);
    out.sample_count = samples;
    const double s_count = static_cast<double>(samples);
    for (std::size_t i = 0; i < entries; ++i) {
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t w = 0; w < w_count; ++w) {
            sum += partials[w].sum[i];
            sum_sq += partials[w].sum_sq[i];
        }
        const double mean = sum / s_count;
        const double var = std::max(0.0, (sum_sq - s_count * mean * mean) / (s_count - 1.0));
        out.mean.data()[i] = mean;
        out.std_error.data()[i] = std::sqrt(var / s_count);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Density flow check
// ---------------------------------------------------------------------------

CorrelatorTensor<double> ensemble_correlator(std::span<const NetworkDraw> members,
                                             const InputSet& inputs,
                                             std::span<const Slot> slots) {
    if (members.size() < 2)
        throw std::invalid_argument("ensemble_correlator: need at least 2 members");
    const std::size_t d_out = members[0].spec->output_dim;
    const std::size_t n = slots.size();
    std::vector<std::size_t> shape(n, d_out);
    CorrelatorTensor<double> result;
    result.slots.assign(slots.begin(), slots.end());
    result.mean = RTensor(shape);
    result.std_error = RTensor(shape);
    result.sample_count = members.size();

    std::vector<double> sum(result.mean.size(), 0.0), sum_sq(result.mean.size(), 0.0);
    ForwardWorkspace ws;
    std::vector<std::vector<double>> outs(inputs.count());
    std::vector<std::size_t> idx(n, 0);
    for (const NetworkDraw& net : members) {
        for (std::size_t p = 0; p < inputs.count(); ++p)
            forward(net, inputs.points[p], ws, outs[p]);
        std::fill(idx.begin(), idx.end(), 0);
        std::size_t flat = 0;
        do {
            double v = 1.0;
            for (std::size_t t = 0; t < n; ++t) v *= outs[slots[t].point][idx[t]];
            sum[flat] += v;
            sum_sq[flat] += v * v;
            ++flat;
        } while (next_multi_index(idx, shape));
    }
    const double m = static_cast<double>(members.size());
    for (std::size_t i = 0; i < result.mean.size(); ++i) {
        const double mean = sum[i] / m;
        const double var = std::max(0.0, (sum_sq[i] - m * mean * mean) / (m - 1.0));
        result.mean[i] = mean;
        result.std_error[i] = std::sqrt(var / m);
    }
    return result;
}

namespace {

// Full-batch gradient descent, no metrics; returns the final loss.
double gd_steps(NetworkDraw& net, const Dataset& data, LossKind loss, LabelEncoding enc,
                std::size_t steps, double lr) {
    const ArchitectureSpec& spec = *net.spec;
    ParamGrads grads;
    grads.init(spec);
    std::vector<std::vector<double>> acts;
    const std::size_t classes = spec.output_dim;
    double total = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
        grads.zero();
        total = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            forward_cached(net, data.row(i), acts);
            const auto& out = acts.back();
            const auto y = encode_label(data.labels[i], classes, enc);
            std::vector<double> dout(classes);
            if (loss == LossKind::Mse) {
                for (std::size_t c = 0; c < classes; ++c) {
                    const double diff = out[c] - y[c];
                    total += diff * diff;
                    dout[c] = 2.0 * diff;
                }
            } else {
                for (std::size_t c = 0; c < classes; ++c) {
                    total += out[c] * out[c] - y[c] * y[c];
                    dout[c] = 2.0 * out[c];
                }
            }
            backprop(net, acts, std::move(dout), grads);
        }
        if (!std::isfinite(total))
            throw std::runtime_error("density_flow_check: non-finite loss at step " +
                                     std::to_string(step));
        apply_update(net, grads, lr / static_cast<double>(data.size()));
    }
    return total / static_cast<double>(data.size());
}

struct FlowBranch {
    std::vector<CorrelatorTensor<double>> onept;
    std::vector<CorrelatorTensor<double>> twopt;
    double final_loss = 0.0;
};

FlowBranch flow_branch(const ArchitectureSpec& spec, const Dataset& data,
                       const InputSet& eval_inputs, LossKind loss,
                       const FlowCheckConfig& cfg, std::uint64_t branch_tag) {
    const std::vector<Slot> slots1{Slot{0, false}};
    const std::vector<Slot> slots2{Slot{0, false}, Slot{1, false}};
    FlowBranch branch;
    branch.onept.resize(cfg.experiments);
    branch.twopt.resize(cfg.experiments);
    std::vector<double> losses(cfg.experiments, 0.0);
    std::atomic<std::size_t> cursor{0};
    detail::run_workers(static_cast<std::size_t>(std::max(1, cfg.workers)),
                        [&](std::size_t) {
        for (;;) {
            const std::size_t e = cursor.fetch_add(1);
            if (e >= cfg.experiments) return;
            RngStream rng(cfg.seed, branch_tag * 1000 + e);
            NetworkSampler sampler(spec, rng);
            std::vector<NetworkDraw> members;
            members.reserve(cfg.ensemble_size);
            double loss_acc = 0.0;
            for (std::size_t m = 0; m < cfg.ensemble_size; ++m) {
                NetworkDraw net = sampler.next();  // copy of the reusable draw
                loss_acc += gd_steps(net, data, loss, LabelEncoding::OneHot, cfg.steps,
                                     cfg.learning_rate);
                members.push_back(std::move(net));
            }
            losses[e] = loss_acc / static_cast<double>(cfg.ensemble_size);
            branch.onept[e] = ensemble_correlator(members, eval_inputs, slots1);
            branch.twopt[e] = ensemble_correlator(members, eval_inputs, slots2);
        }
    });
    double acc = 0.0;
    for (double l : losses) acc += l;
    branch.final_loss = acc / static_cast<double>(cfg.experiments);
    return branch;
}

}  // namespace

FlowCheckReport density_flow_check(const ArchitectureSpec& spec, const Dataset& data,
                                   const InputSet& eval_inputs, const FlowCheckConfig& config) {
    // steps == 0 is legal: it checks the initialization ensembles themselves.
    if (eval_inputs.count() < 2)
        throw std::invalid_argument("density_flow_check: need two evaluation points");

    FlowCheckReport report;
    GroupSpec group{GroupName::SO, spec.output_dim, ActionSide::Output};

    FlowBranch inv = flow_branch(spec, data, eval_inputs, LossKind::SoInvariant, config, 1);
    FlowBranch mse = flow_branch(spec, data, eval_inputs, LossKind::Mse, config, 2);
    report.invariant_loss_final = inv.final_loss;
    report.mse_loss_final = mse.final_loss;

    RngStream elem_rng(config.seed, 424242);
    report.invariant_1pt =
        deviation_report(std::span<const CorrelatorTensor<double>>(inv.onept), group,
                         config.elements, elem_rng.spawn(1));
    report.invariant_2pt =
        deviation_report(std::span<const CorrelatorTensor<double>>(inv.twopt), group,
                         config.elements, elem_rng.spawn(2));
    report.mse_1pt = deviation_report(std::span<const CorrelatorTensor<double>>(mse.onept),
                                      group, config.elements, elem_rng.spawn(3));
    return report;
}

}  // namespace nnsym
