#include "nnsym/runner.hpp"

#include <algorithm>
#include <cmath>

#include "nnsym/config.hpp"
#include "nnsym/idx.hpp"
#include "nnsym/training.hpp"

namespace nnsym {

namespace {

constexpr const char* kVersion = "0.1.0";

struct RunOutput {
    json result;
    std::string csv;
};

std::vector<Slot> cycle_slots(std::size_t order, std::size_t points) {
    std::vector<Slot> slots;
    for (std::size_t t = 0; t < order; ++t) slots.push_back(Slot{t % points, false});
    return slots;
}

std::size_t samples_for_order(const json& config, std::size_t order,
                              const std::optional<std::size_t>& override) {
    if (override) return *override;
    const auto& s = require_field(config, "samples", "config");
    if (order <= 2) return require_size(s, "two_pt", "config.samples");
    return require_size(s, "four_pt", "config.samples");
}

// ---------------------------------------------------------------------------
// check-symmetry
// ---------------------------------------------------------------------------

RunOutput run_check_symmetry(const RunOptions& opt) {
    const json& cfg = opt.config;
    const InputSet inputs = parse_inputs(require_field(cfg, "inputs", "config"));
    GroupSpec group = parse_group(require_field(cfg, "group", "config"));
    if (group.name != GroupName::SO || group.side != ActionSide::Output)
        throw ConfigError("config: check-symmetry expects an SO output group");
    const auto widths = require_size_vector(cfg, "widths", "config");
    const auto orders = require_size_vector(cfg, "orders", "config");
    const std::size_t experiments = require_size(cfg, "experiments", "config");
    const std::size_t elements = require_size(cfg, "elements", "config");
    const double band = optional_double(cfg, "band_multiplier", 1.0);
    const bool synthetic = cfg.contains("synthetic") && cfg.at("synthetic").get<bool>();

    CsvWriter csv({"n", "D", "N", "mu_M", "sigma_M", "delta_M"});
    json rows = json::array();
    RngStream root(opt.seed, 1);

    for (std::size_t wi = 0; wi < widths.size(); ++wi) {
        const std::size_t width = widths[wi];
        ArchitectureSpec spec =
            parse_architecture_with_width(require_field(cfg, "architecture", "config"), width);
        if (spec.output_dim != group.dim)
            throw ConfigError("config: group dim != architecture output dim");
        for (std::size_t oi = 0; oi < orders.size(); ++oi) {
            const std::size_t order = orders[oi];
            const auto slots = cycle_slots(order, inputs.count());
            std::vector<CorrelatorTensor<double>> tensors;
            if (synthetic) {
                // Exact GP tensors built from a reference kernel: a zero report.
                Kernel ref;
                ref.inputs = inputs;
                const std::size_t m = inputs.count();
                ref.values = RMatrix(m, m);
                ref.std_error = RMatrix(m, m);
                for (std::size_t a = 0; a < m; ++a)
                    for (std::size_t b = 0; b < m; ++b) {
                        double d2 = 0.0;
                        for (std::size_t j = 0; j < inputs.dim; ++j) {
                            const double diff = inputs.points[a][j] - inputs.points[b][j];
                            d2 += diff * diff;
                        }
                        ref.values(a, b) = std::exp(-0.5 * d2);
                    }
                std::vector<std::size_t> slot_points;
                for (const Slot& s : slots) slot_points.push_back(s.point);
                CorrelatorTensor<double> exact;
                exact.slots = slots;
                exact.mean = order % 2 == 0
                                 ? wick_correlator(ref, slot_points, spec.output_dim)
                                 : RTensor(std::vector<std::size_t>(order, spec.output_dim));
                exact.std_error = RTensor(exact.mean.shape());
                exact.sample_count = 1;
                tensors.assign(experiments, exact);
            } else {
                const std::size_t samples =
                    samples_for_order(cfg, order, opt.samples_override);
                for (std::size_t e = 0; e < experiments; ++e)
                    tensors.push_back(estimate_correlator(
                        spec, inputs, slots, samples,
                        root.spawn(1000 * wi + 100 * oi + e), opt.workers));
            }
            DeviationReport report = deviation_report(
                std::span<const CorrelatorTensor<double>>(tensors), group, elements,
                root.spawn(777000 + 1000 * wi + oi), DeviationOptions{band});
            csv.add_row({std::to_string(order), std::to_string(group.dim),
                         std::to_string(width), csv_double(report.mu_m),
                         csv_double(report.sigma_m), csv_double(report.delta_m)});
            json jr = to_json(report);
            jr["width"] = width;
            rows.push_back(jr);
        }
    }
    RunOutput out;
    out.result["check"] = "so-output-invariance";
    out.result["rows"] = rows;
    out.csv = csv.text();
    return out;
}

// ---------------------------------------------------------------------------
// gp-limit
// ---------------------------------------------------------------------------

RunOutput run_gp_limit(const RunOptions& opt) {
    const json& cfg = opt.config;
    const InputSet inputs = parse_inputs(require_field(cfg, "inputs", "config"));
    const auto widths = require_size_vector(cfg, "widths", "config");
    const auto& samples = require_field(cfg, "samples", "config");
    const std::size_t kernel_samples =
        opt.samples_override.value_or(require_size(samples, "kernel", "config.samples"));
    const std::size_t fourpt_samples =
        opt.samples_override.value_or(require_size(samples, "four_pt", "config.samples"));
    const json arch = require_field(cfg, "architecture", "config");

    auto family = [&](std::size_t width) {
        return parse_architecture_with_width(arch, width);
    };
    GpLimitReport report = gp_limit_check(family, inputs, widths, kernel_samples,
                                          fourpt_samples, RngStream(opt.seed, 2), opt.workers);

    CsvWriter csv({"N", "max_sigma", "frac_within_4sigma"});
    for (const auto& row : report.rows)
        csv.add_row({std::to_string(row.width), csv_double(row.max_sigma),
                     csv_double(row.frac_within_4sigma)});
    RunOutput out;
    out.result["check"] = "gp-limit";
    out.result["report"] = to_json(report);
    out.csv = csv.text();
    return out;
}

// ---------------------------------------------------------------------------
// translate-check
// ---------------------------------------------------------------------------

RunOutput run_translate_check(const RunOptions& opt) {
    const json& cfg = opt.config;
    ArchitectureSpec spec = parse_architecture(require_field(cfg, "architecture", "config"));
    const InputSet inputs = parse_inputs(require_field(cfg, "inputs", "config"));
    const std::size_t shifts = require_size(cfg, "shifts", "config");
    const auto orders = require_size_vector(cfg, "orders", "config");
    const double threshold = optional_double(cfg, "sigma_threshold", 3.0);

    RngStream root(opt.seed, 3);
    RngStream shift_rng = root.spawn(999);

    CsvWriter csv({"shift", "n", "max_sigma", "frac_within"});
    json rows = json::array();
    json shift_list = json::array();
    json order_summary = json::array();

    for (std::size_t oi = 0; oi < orders.size(); ++oi) {
        const std::size_t order = orders[oi];
        const auto slots = cycle_slots(order, inputs.count());
        const std::size_t samples = samples_for_order(cfg, order, opt.samples_override);
        CorrelatorTensor<double> ref = estimate_correlator(
            spec, inputs, slots, samples, root.spawn(10 * oi), opt.workers);
        std::size_t pooled_within = 0, pooled_total = 0;
        double order_max = 0.0;
        for (std::size_t s = 0; s < shifts; ++s) {
            std::vector<double> c(inputs.dim);
            for (double& v : c) v = shift_rng.normal();
            if (oi == 0) shift_list.push_back(c);
            InputSet moved = transform_inputs(inputs, translation_element(c));
            CorrelatorTensor<double> got = estimate_correlator(
                spec, moved, slots, samples, root.spawn(10 * oi + 100 * (s + 1)),
                opt.workers);
            double max_sigma = 0.0;
            std::size_t within = 0;
            for (std::size_t i = 0; i < ref.mean.size(); ++i) {
                const double err = std::hypot(ref.std_error[i], got.std_error[i]);
                const double diff = std::fabs(ref.mean[i] - got.mean[i]);
                const double sigma = err == 0.0 ? (diff == 0.0 ? 0.0 : 1e300) : diff / err;
                max_sigma = std::max(max_sigma, sigma);
                if (sigma <= threshold) ++within;
            }
            pooled_within += within;
            pooled_total += ref.mean.size();
            order_max = std::max(order_max, max_sigma);
            const double frac =
                static_cast<double>(within) / static_cast<double>(ref.mean.size());
            csv.add_row({std::to_string(s), std::to_string(order), csv_double(max_sigma),
                         csv_double(frac)});
            json jr;
            jr["shift"] = s;
            jr["order"] = order;
            jr["max_sigma"] = max_sigma;
            jr["frac_within"] = frac;
            rows.push_back(jr);
        }
        // Tensor entries share draws, so exceedances cluster; the stable
        // statistic pools the elementwise compares across shifts.
        const double pooled =
            static_cast<double>(pooled_within) / static_cast<double>(pooled_total);
        json jo;
        jo["order"] = order;
        jo["pooled_frac_within"] = pooled;
        jo["max_sigma"] = order_max;
        jo["pass"] = pooled >= 0.95 && order_max <= 5.0;
        order_summary.push_back(jo);
    }
    bool pass = true;
    for (const auto& jo : order_summary) pass = pass && jo.at("pass").get<bool>();
    RunOutput out;
    out.result["check"] = "translation-invariance";
    out.result["sigma_threshold"] = threshold;
    out.result["shifts"] = shift_list;
    out.result["rows"] = rows;
    out.result["orders"] = order_summary;
    out.result["pass"] = pass;
    out.csv = csv.text();
    return out;
}

// ---------------------------------------------------------------------------
// su-check
// ---------------------------------------------------------------------------

RunOutput run_su_check(const RunOptions& opt) {
    const json& cfg = opt.config;
    ArchitectureSpec spec = parse_architecture(require_field(cfg, "architecture", "config"));
    const InputSet inputs = parse_inputs(require_field(cfg, "inputs", "config"));
    const std::size_t experiments = require_size(cfg, "experiments", "config");
    const std::size_t elements = require_size(cfg, "elements", "config");
    const std::size_t samples =
        opt.samples_override.value_or(require_size(cfg, "samples_per_run", "config"));
    GroupSpec group{GroupName::SU, spec.output_dim, ActionSide::Output};

    RngStream root(opt.seed, 4);
    CsvWriter csv({"check", "value"});
    json result;

    // Unbalanced correlators: one f; two f one f-dagger. Both must vanish.
    const std::vector<std::vector<Slot>> unbalanced = {
        {Slot{0, false}},
        {Slot{0, false}, Slot{1, false}, Slot{0, true}},
    };
    json unbalanced_rows = json::array();
    double worst_unbalanced = 0.0;
    for (std::size_t u = 0; u < unbalanced.size(); ++u) {
        CorrelatorTensor<cplx> t = estimate_correlator_complex(
            spec, inputs, unbalanced[u], samples, root.spawn(10 + u), opt.workers);
        double max_sigma = 0.0;
        for (std::size_t i = 0; i < t.mean.size(); ++i) {
            const double sigma =
                t.std_error[i] == 0.0 ? 0.0 : std::abs(t.mean[i]) / t.std_error[i];
            max_sigma = std::max(max_sigma, sigma);
        }
        worst_unbalanced = std::max(worst_unbalanced, max_sigma);
        json jr;
        jr["slots"] = unbalanced[u].size();
        jr["max_sigma"] = max_sigma;
        unbalanced_rows.push_back(jr);
        csv.add_row({"unbalanced_" + std::to_string(u) + "_max_sigma",
                     csv_double(max_sigma)});
    }

    // Balanced 2-pt: invariant under random SU elements.
    const std::vector<Slot> balanced{Slot{0, false}, Slot{1, true}};
    std::vector<CorrelatorTensor<cplx>> tensors;
    for (std::size_t e = 0; e < experiments; ++e)
        tensors.push_back(estimate_correlator_complex(spec, inputs, balanced, samples,
                                                      root.spawn(100 + e), opt.workers));
    DeviationReport report =
        deviation_report(std::span<const CorrelatorTensor<cplx>>(tensors), group, elements,
                         root.spawn(888), DeviationOptions{3.0});
    csv.add_row({"balanced_mu_M", csv_double(report.mu_m)});
    csv.add_row({"balanced_delta_M", csv_double(report.delta_m)});
    csv.add_row({"balanced_pass_fraction", csv_double(report.pass_fraction)});

    result["check"] = "su-output-invariance";
    result["unbalanced"] = unbalanced_rows;
    result["unbalanced_max_sigma"] = worst_unbalanced;
    result["balanced"] = to_json(report);
    RunOutput out;
    out.result = result;
    out.csv = csv.text();
    return out;
}

// ---------------------------------------------------------------------------
// ward
// ---------------------------------------------------------------------------

RunOutput run_ward(const RunOptions& opt) {
    const json& cfg = opt.config;
    const InputSet inputs = parse_inputs(require_field(cfg, "inputs", "config"));
    const std::size_t d = require_size(cfg, "d", "config");
    const std::size_t out_dim = require_size(cfg, "out_dim", "config");
    const double stddev = require_double(cfg, "std", "config");
    const double mu_w = optional_double(cfg, "mu_w", 0.1);
    const std::size_t samples =
        opt.samples_override.value_or(require_size(cfg, "samples_per_run", "config"));
    const auto plane = require_size_vector(cfg, "plane", "config");
    if (plane.size() != 2 || plane[0] >= out_dim || plane[1] >= out_dim ||
        plane[0] == plane[1])
        throw ConfigError("config: 'plane' must name two distinct output components");

    RMatrix generator(out_dim, out_dim);
    generator(plane[0], plane[1]) = -1.0;
    generator(plane[1], plane[0]) = 1.0;

    RngStream root(opt.seed, 5);
    CsvWriter csv({"branch", "n", "max_sigma"});
    json rows = json::array();

    auto run_branch = [&](const char* name, double mean, std::uint64_t tag) {
        ArchitectureSpec spec = linear_net(d, out_dim, mean, stddev);
        CorrelatorTensor<double> sum =
            ward_identity_sum(spec, inputs, generator, samples, root.spawn(tag), opt.workers);
        double max_sigma = 0.0;
        for (std::size_t i = 0; i < sum.mean.size(); ++i) {
            const double sigma =
                sum.std_error[i] == 0.0 ? 0.0 : std::fabs(sum.mean[i]) / sum.std_error[i];
            max_sigma = std::max(max_sigma, sigma);
        }
        csv.add_row({name, std::to_string(inputs.count()), csv_double(max_sigma)});
        json jr;
        jr["branch"] = name;
        jr["order"] = inputs.count();
        jr["max_sigma"] = max_sigma;
        rows.push_back(jr);
        return max_sigma;
    };

    const double invariant_sigma = run_branch("invariant", 0.0, 21);
    const double broken_sigma = run_branch("broken", mu_w, 22);

    RunOutput out;
    out.result["check"] = "ward-identity";
    out.result["rows"] = rows;
    out.result["invariant_max_sigma"] = invariant_sigma;
    out.result["broken_max_sigma"] = broken_sigma;
    out.csv = csv.text();
    return out;
}

// ---------------------------------------------------------------------------
// ntk
// ---------------------------------------------------------------------------

RunOutput run_ntk(const RunOptions& opt) {
    const json& cfg = opt.config;
    ArchitectureSpec spec = parse_architecture(require_field(cfg, "architecture", "config"));
    const auto x = require_double_vector(cfg, "x", "config");
    const auto xp = require_double_vector(cfg, "xp", "config");
    const std::size_t samples =
        opt.samples_override.value_or(require_size(cfg, "samples_per_run", "config"));

    RngStream root(opt.seed, 6);
    EnsembleNTK ntk = ensemble_ntk(spec, x, xp, samples, root.spawn(1), opt.workers);

    double offdiag_max_sigma = 0.0;
    for (std::size_t i = 0; i < ntk.mean.rows(); ++i)
        for (std::size_t j = 0; j < ntk.mean.cols(); ++j) {
            if (i == j) continue;
            const double sigma = ntk.std_error(i, j) == 0.0
                                     ? 0.0
                                     : std::fabs(ntk.mean(i, j)) / ntk.std_error(i, j);
            offdiag_max_sigma = std::max(offdiag_max_sigma, sigma);
        }

    // Rotation invariance of the ensemble kernel.
    RngStream elem_rng = root.spawn(2);
    GroupElement elem =
        random_group_element(GroupSpec{GroupName::SO, spec.output_dim, ActionSide::Output},
                             elem_rng);
    const RMatrix rotated = elem.rotation * ntk.mean * elem.rotation.transpose();
    double rotation_max_sigma = 0.0;
    for (std::size_t i = 0; i < ntk.mean.rows(); ++i)
        for (std::size_t j = 0; j < ntk.mean.cols(); ++j) {
            // Combined stderr: raw entry plus the rotated entry's propagated error.
            double var_rot = 0.0;
            for (std::size_t a = 0; a < ntk.mean.rows(); ++a)
                for (std::size_t b = 0; b < ntk.mean.cols(); ++b) {
                    const double w = elem.rotation(i, a) * elem.rotation(j, b);
                    var_rot += w * w * ntk.std_error(a, b) * ntk.std_error(a, b);
                }
            const double err = std::sqrt(var_rot + ntk.std_error(i, j) * ntk.std_error(i, j));
            const double diff = std::fabs(rotated(i, j) - ntk.mean(i, j));
            rotation_max_sigma = std::max(rotation_max_sigma, err == 0.0 ? 0.0 : diff / err);
        }

    // Finite-difference check of the backprop Jacobian on one draw.
    RngStream draw_rng = root.spawn(3);
    NetworkDraw net = sample_network(spec, draw_rng);
    const RMatrix jac = output_jacobian(net, x);
    double fd_max_rel = 0.0;
    {
        const double h = 1e-4;
        std::size_t col = 0;
        for (std::size_t li = 0; li < spec.layers.size(); ++li) {
            auto probe = [&](double* slot, std::size_t column) {
                const double saved = *slot;
                *slot = saved + h;
                const auto up = forward(net, x);
                *slot = saved - h;
                const auto down = forward(net, x);
                *slot = saved;
                for (std::size_t i = 0; i < up.size(); ++i) {
                    const double fd = (up[i] - down[i]) / (2.0 * h);
                    const double got = jac(i, column);
                    const double denom = std::max({std::fabs(fd), std::fabs(got), 1e-8});
                    fd_max_rel = std::max(fd_max_rel, std::fabs(fd - got) / denom);
                }
            };
            if (const auto* lin = std::get_if<LinearLayer>(&spec.layers[li])) {
                if (!lin->deterministic_weight) {
                    auto w = net.layers[li].weight.data();
                    for (std::size_t e = 0; e < w.size(); ++e) probe(&w[e], col++);
                }
                if (!net.layers[li].bias.empty())
                    throw ConfigError("config: ntk architecture should not have biases");
            } else if (std::get_if<TLayer>(&spec.layers[li])) {
                for (std::size_t e = 0; e < net.layers[li].bias.size(); ++e)
                    probe(&net.layers[li].bias[e], col++);
            }
        }
    }

    CsvWriter csv({"check", "value"});
    csv.add_row({"offdiag_max_sigma", csv_double(offdiag_max_sigma)});
    csv.add_row({"rotation_max_sigma", csv_double(rotation_max_sigma)});
    csv.add_row({"fd_max_rel_error", csv_double(fd_max_rel)});

    RunOutput out;
    out.result["check"] = "ntk";
    out.result["kernel"] = to_json(ntk);
    out.result["offdiag_max_sigma"] = offdiag_max_sigma;
    out.result["rotation_max_sigma"] = rotation_max_sigma;
    out.result["fd_max_rel_error"] = fd_max_rel;
    out.csv = csv.text();
    return out;
}

// ---------------------------------------------------------------------------
// Training subcommands
// ---------------------------------------------------------------------------

struct ResolvedData {
    Dataset train, test;
    std::string source;
};

ResolvedData resolve_dataset(const json& tcfg, const std::filesystem::path& data_dir) {
    const std::string choice = optional_string(tcfg, "dataset", "auto");
    const auto img = data_dir / "train-images-idx3-ubyte";
    const auto lbl = data_dir / "train-labels-idx1-ubyte";
    const auto timg = data_dir / "t10k-images-idx3-ubyte";
    const auto tlbl = data_dir / "t10k-labels-idx1-ubyte";
    const bool have_idx = !data_dir.empty() && std::filesystem::exists(img) &&
                          std::filesystem::exists(lbl) && std::filesystem::exists(timg) &&
                          std::filesystem::exists(tlbl);
    if (choice == "fashion-mnist" && !have_idx)
        throw ConfigError("config: dataset 'fashion-mnist' requested but IDX files not found "
                          "under '" +
                          data_dir.string() + "'");
    ResolvedData out;
    if ((choice == "fashion-mnist" || choice == "auto") && have_idx) {
        out.train = to_dataset(load_idx_files(img, lbl));
        out.test = to_dataset(load_idx_files(timg, tlbl));
        out.source = "fashion-mnist";
        const std::size_t train_cap = optional_size(tcfg, "train_cap", 0);
        const std::size_t test_cap = optional_size(tcfg, "test_cap", 0);
        auto truncate = [](Dataset& d, std::size_t cap) {
            if (cap == 0 || cap >= d.size()) return;
            d.features.resize(cap * d.feature_dim);
            d.labels.resize(cap);
        };
        truncate(out.train, train_cap);
        truncate(out.test, test_cap);
        return out;
    }
    if (choice != "auto" && choice != "blobs")
        throw ConfigError("config: unknown dataset '" + choice + "'");
    BlobParams params;
    params.classes = optional_size(tcfg, "classes", 10);
    params.dim = optional_size(tcfg, "blob_dim", 64);
    params.noise = optional_double(tcfg, "blob_noise", 0.25);
    params.seed = optional_size(tcfg, "blob_seed", 7);
    const std::size_t train_per_class = optional_size(tcfg, "train_per_class", 600);
    const std::size_t test_per_class = optional_size(tcfg, "test_per_class", 200);
    out.train = make_blobs(params, train_per_class, 1001);
    out.test = make_blobs(params, test_per_class, 2002);
    out.source = "blobs";
    return out;
}

TrainingConfig parse_training_config(const json& tcfg, std::uint64_t seed) {
    TrainingConfig cfg;
    cfg.epochs = optional_size(tcfg, "epochs", 2);
    cfg.batch_size = optional_size(tcfg, "batch", 64);
    cfg.learning_rate = optional_double(tcfg, "lr", 1e-3);
    cfg.encoder = optional_string(tcfg, "encoder", "one-hot") == "one-cold"
                      ? LabelEncoding::OneCold
                      : LabelEncoding::OneHot;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
}

ArchitectureSpec training_architecture(const json& tcfg, std::size_t feature_dim,
                                       std::size_t classes) {
    const std::size_t n = optional_size(tcfg, "hidden_width", 50);
    // Input layer variance 1/sqrt(d), output layer std 1/sqrt(N).
    const double w0 = 1.0 / std::pow(static_cast<double>(feature_dim), 0.25);
    const double w1 = 1.0 / std::sqrt(static_cast<double>(n));
    return relu_net(feature_dim, n, classes, w0, w1);
}

std::vector<std::uint64_t> parse_seeds(const json& tcfg) {
    std::vector<std::uint64_t> seeds;
    if (tcfg.contains("seeds"))
        for (const auto& s : tcfg.at("seeds")) seeds.push_back(s.get<std::uint64_t>());
    if (seeds.empty()) throw ConfigError("config: missing 'training.seeds'");
    return seeds;
}

void emit_grid_csv(CsvWriter& csv, const std::vector<TrainGridCell>& cells) {
    for (const auto& cell : cells)
        for (std::size_t si = 0; si < cell.seeds.size(); ++si)
            for (const auto& m : cell.per_seed_metrics[si])
                csv.add_row({std::to_string(cell.seeds[si]), std::to_string(cell.k),
                             csv_double(cell.mu_w), std::to_string(m.epoch),
                             csv_double(m.train_loss), csv_double(m.test_accuracy)});
}

json grid_summary(const std::vector<TrainGridCell>& cells) {
    json rows = json::array();
    for (const auto& cell : cells) {
        json jr;
        jr["k"] = cell.k;
        jr["mu_W"] = cell.mu_w;
        jr["mean_max_acc"] = cell.mean_max_accuracy;
        jr["stddev_acc"] = cell.stddev_accuracy;
        jr["per_seed"] = cell.per_seed;
        rows.push_back(jr);
    }
    return rows;
}

RunOutput run_train_grid(const RunOptions& opt) {
    const json& tcfg = require_field(opt.config, "training", "config");
    ResolvedData data = resolve_dataset(tcfg, opt.data_dir);
    const std::size_t classes = optional_size(tcfg, "classes", 10);
    ArchitectureSpec spec = training_architecture(tcfg, data.train.feature_dim, classes);
    TrainingConfig cfg = parse_training_config(tcfg, opt.seed);
    const auto seeds = parse_seeds(tcfg);
    const auto k_grid = require_size_vector(tcfg, "k_grid", "config.training");
    const auto mu_grid = require_double_vector(tcfg, "mu_grid", "config.training");

    const auto cells =
        train_grid(spec, data.train, data.test, k_grid, mu_grid, seeds, cfg, opt.workers);

    CsvWriter csv({"seed", "k", "mu_W", "epoch", "train_loss", "acc"});
    emit_grid_csv(csv, cells);
    RunOutput out;
    out.result["check"] = "train-grid";
    out.result["dataset"] = data.source;
    out.result["cells"] = grid_summary(cells);
    out.csv = csv.text();
    return out;
}

RunOutput run_train_onecold(const RunOptions& opt) {
    const json& tcfg = require_field(opt.config, "training", "config");
    ResolvedData data = resolve_dataset(tcfg, opt.data_dir);
    const std::size_t classes = optional_size(tcfg, "classes", 10);
    ArchitectureSpec spec = training_architecture(tcfg, data.train.feature_dim, classes);
    TrainingConfig cfg = parse_training_config(tcfg, opt.seed);
    const auto seeds = parse_seeds(tcfg);
    const auto mu_grid = require_double_vector(tcfg, "mu_grid", "config.training");

    const auto cells =
        one_cold_experiment(spec, data.train, data.test, mu_grid, seeds, cfg, opt.workers);

    CsvWriter csv({"seed", "k", "mu_W", "epoch", "train_loss", "acc"});
    emit_grid_csv(csv, cells);

    // Shape bookkeeping for a unimodal accuracy curve over mu_W.
    std::size_t peak = 0;
    for (std::size_t i = 1; i < cells.size(); ++i)
        if (cells[i].mean_max_accuracy > cells[peak].mean_max_accuracy) peak = i;
    const bool interior_peak = peak != 0 && peak + 1 != cells.size();

    RunOutput out;
    out.result["check"] = "train-onecold";
    out.result["dataset"] = data.source;
    out.result["cells"] = grid_summary(cells);
    out.result["peak_mu_W"] = cells[peak].mu_w;
    out.result["interior_peak"] = interior_peak;
    out.csv = csv.text();
    return out;
}

// ---------------------------------------------------------------------------
// flow-check
// ---------------------------------------------------------------------------

RunOutput run_flow_check(const RunOptions& opt) {
    const json& fcfg = require_field(opt.config, "flow", "config");
    FlowCheckConfig cfg;
    cfg.steps = optional_size(fcfg, "steps", 100);
    cfg.learning_rate = optional_double(fcfg, "lr", 0.05);
    cfg.ensemble_size = optional_size(fcfg, "ensemble", 400);
    cfg.experiments = optional_size(fcfg, "experiments", 6);
    cfg.elements = optional_size(fcfg, "elements", 200);
    cfg.seed = opt.seed;
    cfg.workers = opt.workers;

    const std::size_t d = optional_size(fcfg, "d", 3);
    const std::size_t n = optional_size(fcfg, "hidden_width", 16);
    const std::size_t out_dim = optional_size(fcfg, "out_dim", 3);
    ArchitectureSpec spec = relu_net(d, n, out_dim,
                                     1.0 / std::pow(static_cast<double>(d), 0.25),
                                     1.0 / std::sqrt(static_cast<double>(n)));
    BlobParams params;
    params.classes = out_dim;
    params.dim = d;
    params.seed = 31;
    Dataset data = make_blobs(params, optional_size(fcfg, "per_class", 8), 3003);

    InputSet eval_inputs;
    eval_inputs.dim = d;
    eval_inputs.points = {std::vector<double>(data.row(0).begin(), data.row(0).end()),
                          std::vector<double>(data.row(1).begin(), data.row(1).end())};

    FlowCheckReport report = density_flow_check(spec, data, eval_inputs, cfg);

    CsvWriter csv({"branch", "n", "mu_M", "delta_M", "pass_fraction"});
    auto row = [&](const char* name, std::size_t order, const DeviationReport& r) {
        csv.add_row({name, std::to_string(order), csv_double(r.mu_m), csv_double(r.delta_m),
                     csv_double(r.pass_fraction)});
    };
    row("invariant", 1, report.invariant_1pt);
    row("invariant", 2, report.invariant_2pt);
    row("mse", 1, report.mse_1pt);

    RunOutput out;
    out.result["check"] = "flow-check";
    out.result["report"] = to_json(report);
    out.csv = csv.text();
    return out;
}

// ---------------------------------------------------------------------------
// perturbative
// ---------------------------------------------------------------------------

RunOutput run_perturbative(const RunOptions& opt) {
    const json& cfg = opt.config;
    const double sigma = require_double(cfg, "sigma", "config");
    const double lambda = require_double(cfg, "lambda", "config");
    const std::size_t width = require_size(cfg, "width", "config");
    const std::size_t out_dim = require_size(cfg, "out_dim", "config");
    const InputSet inputs = parse_inputs(require_field(cfg, "inputs", "config"));
    if (inputs.dim != width)
        throw ConfigError("config: perturbative inputs must have dimension 'width'");
    const std::size_t samples =
        opt.samples_override.value_or(require_size(cfg, "samples_per_run", "config"));

    // Deterministic hidden features g = x: per-component kernel (x_a . x_b)/N.
    Kernel hidden;
    hidden.inputs = inputs;
    const std::size_t m = inputs.count();
    hidden.values = RMatrix(m, m);
    hidden.std_error = RMatrix(m, m);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) {
            double dot = 0.0;
            for (std::size_t j = 0; j < width; ++j)
                dot += inputs.points[a][j] * inputs.points[b][j];
            hidden.values(a, b) = dot / static_cast<double>(width);
        }
    hidden.sample_count = 1;

    PerturbativeKernel pred = perturbative_ngp_2pt(sigma, lambda, hidden, width, out_dim);

    // Metropolis ensemble of the same quartic output layer.
    ArchitectureSpec spec;
    spec.input_dim = width;
    spec.output_dim = out_dim;
    LinearLayer l;
    l.in = width;
    l.out = out_dim;
    l.weight_prior = {QuarticInvariantPrior{sigma, lambda}, {out_dim, width}};
    spec.layers = {l};
    spec.validate();

    CsvWriter csv({"pair", "component", "predicted", "measured", "stderr", "sigma"});
    double max_sigma = 0.0;
    json rows = json::array();
    RngStream root(opt.seed, 8);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a; b < m; ++b) {
            const std::vector<Slot> slots{Slot{a, false}, Slot{b, false}};
            CorrelatorTensor<double> g2 = estimate_correlator(
                spec, inputs, slots, samples, root.spawn(a * m + b), opt.workers);
            for (std::size_t i = 0; i < out_dim; ++i) {
                const double measured = g2.mean.at({i, i});
                const double err = g2.std_error.at({i, i});
                const double predicted = pred.kernel.values(a, b);
                const double sigma_dev =
                    err == 0.0 ? 0.0 : std::fabs(measured - predicted) / err;
                max_sigma = std::max(max_sigma, sigma_dev);
                csv.add_row({std::to_string(a) + "-" + std::to_string(b), std::to_string(i),
                             csv_double(predicted), csv_double(measured), csv_double(err),
                             csv_double(sigma_dev)});
                json jr;
                jr["pair"] = {a, b};
                jr["component"] = i;
                jr["predicted"] = predicted;
                jr["measured"] = measured;
                jr["stderr"] = err;
                jr["sigma"] = sigma_dev;
                rows.push_back(jr);
            }
        }

    RunOutput out;
    out.result["check"] = "perturbative-2pt";
    out.result["coefficient"] = pred.coefficient;
    out.result["order_lambda_coefficient"] = pred.order_lambda_coefficient;
    out.result["large_lambda_warning"] = pred.large_lambda_warning;
    out.result["max_sigma"] = max_sigma;
    out.result["rows"] = rows;
    out.csv = csv.text();
    return out;
}

}  // namespace

const std::vector<std::string>& subcommand_names() {
    static const std::vector<std::string> names = {
        "check-symmetry", "gp-limit",  "translate-check", "su-check",   "ward",
        "ntk",            "train-grid", "train-onecold",   "flow-check", "perturbative"};
    return names;
}

void run_subcommand(const RunOptions& options) {
    RunOutput output;
    if (options.subcommand == "check-symmetry")
        output = run_check_symmetry(options);
    else if (options.subcommand == "gp-limit")
        output = run_gp_limit(options);
    else if (options.subcommand == "translate-check")
        output = run_translate_check(options);
    else if (options.subcommand == "su-check")
        output = run_su_check(options);
    else if (options.subcommand == "ward")
        output = run_ward(options);
    else if (options.subcommand == "ntk")
        output = run_ntk(options);
    else if (options.subcommand == "train-grid")
        output = run_train_grid(options);
    else if (options.subcommand == "train-onecold")
        output = run_train_onecold(options);
    else if (options.subcommand == "flow-check")
        output = run_flow_check(options);
    else if (options.subcommand == "perturbative")
        output = run_perturbative(options);
    else
        throw ConfigError("unknown subcommand '" + options.subcommand + "'");

    json manifest;
    manifest["subcommand"] = options.subcommand;
    manifest["version"] = kVersion;
    manifest["seed"] = options.seed;
    manifest["workers"] = options.workers;
    if (options.samples_override)
        manifest["samples_override"] = *options.samples_override;
    else
        manifest["samples_override"] = nullptr;
    manifest["config_hash"] = config_hash(options.config);
    manifest["config"] = options.config;

    std::filesystem::create_directories(options.out_dir);
    write_text_file(options.out_dir / "manifest.json", manifest.dump(2) + "\n");
    write_text_file(options.out_dir / "result.json", output.result.dump(2) + "\n");
    write_text_file(options.out_dir / "result.csv", output.csv);
}

RunOptions options_from_manifest(const std::filesystem::path& manifest_path,
                                 std::filesystem::path out_dir) {
    const json manifest = json::parse(read_text_file(manifest_path));
    RunOptions opt;
    opt.subcommand = manifest.at("subcommand").get<std::string>();
    opt.seed = manifest.at("seed").get<std::uint64_t>();
    opt.workers = manifest.at("workers").get<int>();
    if (manifest.contains("samples_override") && !manifest.at("samples_override").is_null())
        opt.samples_override = manifest.at("samples_override").get<std::size_t>();
    opt.config = manifest.at("config");
    opt.out_dir = std::move(out_dir);
    return opt;
}

}  // namespace nnsym
