#include "nnsym/config.hpp"

#include <cmath>

#include "nnsym/rng.hpp"

namespace nnsym {

using ojson = nlohmann::ordered_json;

const ojson& require_field(const ojson& j, const std::string& key, const std::string& path) {
    if (!j.is_object() || !j.contains(key))
        throw ConfigError("config: missing required field '" + path + "." + key + "'");
    return j.at(key);
}

double require_double(const ojson& j, const std::string& key, const std::string& path) {
    const auto& f = require_field(j, key, path);
    if (!f.is_number())
        throw ConfigError("config: field '" + path + "." + key + "' must be a number");
    return f.get<double>();
}

std::size_t require_size(const ojson& j, const std::string& key, const std::string& path) {
    const auto& f = require_field(j, key, path);
    if (!f.is_number_unsigned() && !(f.is_number_integer() && f.get<long long>() >= 0))
        throw ConfigError("config: field '" + path + "." + key +
                          "' must be a non-negative integer");
    return f.get<std::size_t>();
}

std::string require_string(const ojson& j, const std::string& key, const std::string& path) {
    const auto& f = require_field(j, key, path);
    if (!f.is_string())
        throw ConfigError("config: field '" + path + "." + key + "' must be a string");
    return f.get<std::string>();
}

double optional_double(const ojson& j, const std::string& key, double fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return j.at(key).get<double>();
}

std::size_t optional_size(const ojson& j, const std::string& key, std::size_t fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return j.at(key).get<std::size_t>();
}

std::string optional_string(const ojson& j, const std::string& key, std::string fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return j.at(key).get<std::string>();
}

std::vector<double> require_double_vector(const ojson& j, const std::string& key,
                                          const std::string& path) {
    const auto& f = require_field(j, key, path);
    if (!f.is_array() || f.empty())
        throw ConfigError("config: field '" + path + "." + key +
                          "' must be a non-empty array");
    std::vector<double> out;
    for (const auto& v : f) {
        if (!v.is_number())
            throw ConfigError("config: field '" + path + "." + key +
                              "' must contain numbers only");
        out.push_back(v.get<double>());
    }
    return out;
}

std::vector<std::size_t> require_size_vector(const ojson& j, const std::string& key,
                                             const std::string& path) {
    const auto& f = require_field(j, key, path);
    if (!f.is_array() || f.empty())
        throw ConfigError("config: field '" + path + "." + key +
                          "' must be a non-empty array");
    std::vector<std::size_t> out;
    for (const auto& v : f) out.push_back(v.get<std::size_t>());
    return out;
}

namespace {

ParameterPrior parse_prior(const ojson& j, std::vector<std::size_t> shape,
                           const std::string& path) {
    const std::string kind = require_string(j, "kind", path);
    ParameterPrior prior;
    prior.shape = std::move(shape);
    if (kind == "gaussian") {
        prior.kind = GaussianPrior{optional_double(j, "mean", 0.0),
                                   require_double(j, "std", path)};
    } else if (kind == "uniform-circle") {
        prior.kind = UniformCirclePrior{};
    } else if (kind == "quartic") {
        prior.kind = QuarticInvariantPrior{require_double(j, "std", path),
                                           require_double(j, "lambda", path)};
    } else {
        throw ConfigError("config: unknown prior kind '" + kind + "' at '" + path + "'");
    }
    return prior;
}

RMatrix parse_matrix(const ojson& j, const std::string& path) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw ConfigError("config: '" + path + "' must be an array of rows");
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].size();
    RMatrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (j[i].size() != cols)
            throw ConfigError("config: ragged matrix at '" + path + "'");
        for (std::size_t c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    }
    return m;
}

ArchitectureSpec parse_layer_list(const ojson& j, const std::string& path) {
    ArchitectureSpec spec;
    spec.input_dim = require_size(j, "input_dim", path);
    spec.output_dim = require_size(j, "output_dim", path);
    spec.field = optional_string(j, "field", "real") == "complex" ? FieldType::Complex
                                                                  : FieldType::Real;
    const auto& layers = require_field(j, "layers", path);
    if (!layers.is_array() || layers.empty())
        throw ConfigError("config: '" + path + ".layers' must be a non-empty array");

    for (std::size_t li = 0; li < layers.size(); ++li) {
        const auto& lj = layers[li];
        const std::string lpath = path + ".layers[" + std::to_string(li) + "]";
        const std::string kind = require_string(lj, "kind", lpath);
        if (kind == "linear") {
            LinearLayer l;
            l.in = require_size(lj, "in", lpath);
            l.out = require_size(lj, "out", lpath);
            l.scale = optional_double(lj, "scale", 1.0);
            if (lj.contains("fixed_weight")) {
                l.deterministic_weight = true;
                l.fixed_weight = parse_matrix(lj.at("fixed_weight"), lpath + ".fixed_weight");
                l.weight_prior = {GaussianPrior{0.0, 1.0}, {l.out, l.in}};
            } else {
                l.weight_prior = parse_prior(require_field(lj, "weight_prior", lpath),
                                             {l.out, l.in}, lpath + ".weight_prior");
            }
            if (lj.contains("bias_prior"))
                l.bias_prior = parse_prior(lj.at("bias_prior"), {l.out},
                                           lpath + ".bias_prior");
            spec.layers.push_back(l);
        } else if (kind == "t_layer") {
            TLayer t;
            t.weight = parse_matrix(require_field(lj, "weight", lpath), lpath + ".weight");
            t.out = t.weight.rows();
            t.in = t.weight.cols();
            spec.layers.push_back(t);
        } else if (kind == "activation") {
            ActivationLayer a;
            const std::string name = require_string(lj, "name", lpath);
            if (name == "relu") {
                a.kind = Activation::Relu;
            } else if (name == "exp_normalized") {
                a.kind = Activation::ExpNormalized;
                a.sigma_b = require_double(lj, "sigma_b", lpath);
                a.sigma_w = require_double(lj, "sigma_w", lpath);
                a.d = require_size(lj, "d", lpath);
            } else {
                throw ConfigError("config: unknown activation '" + name + "' at '" + lpath +
                                  "'");
            }
            spec.layers.push_back(a);
        } else if (kind == "complex_linear") {
            ComplexLinearLayer c;
            c.in = require_size(lj, "in", lpath);
            c.out = require_size(lj, "out", lpath);
            c.weight_std = require_double(lj, "weight_std", lpath);
            if (lj.contains("bias_std")) c.bias_std = lj.at("bias_std").get<double>();
            spec.layers.push_back(c);
        } else {
            throw ConfigError("config: unknown layer kind '" + kind + "' at '" + lpath + "'");
        }
    }
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("config: '" + path + "': " + e.what());
    }
    return spec;
}

RMatrix deterministic_t_weight(std::size_t out, std::size_t in, std::uint64_t seed) {
    RngStream rng(seed, 4242);
    RMatrix w(out, in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w.data()) v = scale * rng.normal();
    return w;
}

ArchitectureSpec parse_preset(const ojson& j, std::optional<std::size_t> width_override,
                              const std::string& path) {
    const std::string preset = require_string(j, "preset", path);
    auto width = [&](const char* key) {
        return width_override ? *width_override : require_size(j, key, path);
    };
    if (preset == "gauss-net") {
        return gauss_net(require_size(j, "d", path), width("n"),
                         require_size(j, "out_dim", path), require_double(j, "sigma_w", path),
                         require_double(j, "sigma_b", path));
    }
    if (preset == "relu-net") {
        const std::size_t d = require_size(j, "d", path);
        const std::size_t n = width("n");
        // Default width scalings: variance 1/sqrt(d) on the input layer,
        // std 1/sqrt(n) on the output layer.
        const double w0 = optional_double(j, "w0_std",
                                          1.0 / std::pow(static_cast<double>(d), 0.25));
        const double w1 = optional_double(j, "w1_std",
                                          1.0 / std::sqrt(static_cast<double>(n)));
        return relu_net(d, n, require_size(j, "out_dim", path), w0, w1,
                        optional_double(j, "output_scale", 1.0));
    }
    if (preset == "linear-net") {
        return linear_net(require_size(j, "d", path), require_size(j, "out_dim", path),
                          optional_double(j, "mean", 0.0), require_double(j, "std", path));
    }
    if (preset == "t-net") {
        const std::size_t d = require_size(j, "d", path);
        const std::size_t t_out = require_size(j, "t_out", path);
        const std::uint64_t wseed = optional_size(j, "t_weight_seed", 5);
        return t_layer_net(deterministic_t_weight(t_out, d, wseed), width("n"),
                           require_size(j, "out_dim", path),
                           optional_double(j, "w_std", 1.0), optional_double(j, "v_std", 1.0));
    }
    if (preset == "complex-net") {
        const std::size_t n = width("n");
        return complex_output_net(require_size(j, "d", path), n,
                                  require_size(j, "out_dim", path),
                                  optional_double(j, "w0_std", 1.0),
                                  require_double(j, "wout_std", path));
    }
    throw ConfigError("config: unknown architecture preset '" + preset + "' at '" + path +
                      "'");
}

}  // namespace

ArchitectureSpec parse_architecture(const ojson& j, const std::string& path) {
    if (j.is_object() && j.contains("preset")) return parse_preset(j, std::nullopt, path);
    return parse_layer_list(j, path);
}

ArchitectureSpec parse_architecture_with_width(const ojson& j, std::size_t width,
                                               const std::string& path) {
    if (!j.is_object() || !j.contains("preset"))
        throw ConfigError("config: width sweeps need a preset architecture at '" + path + "'");
    return parse_preset(j, width, path);
}

GroupSpec parse_group(const ojson& j, const std::string& path) {
    GroupSpec g;
    const std::string name = require_string(j, "name", path);
    if (name == "SO")
        g.name = GroupName::SO;
    else if (name == "SU")
        g.name = GroupName::SU;
    else if (name == "translation")
        g.name = GroupName::Translation;
    else
        throw ConfigError("config: unknown group '" + name + "' at '" + path + "'");
    g.dim = require_size(j, "dim", path);
    const std::string side = optional_string(j, "side", "output");
    if (side == "output")
        g.side = ActionSide::Output;
    else if (side == "input")
        g.side = ActionSide::Input;
    else
        throw ConfigError("config: group side must be 'input' or 'output' at '" + path + "'");
    return g;
}

InputSet parse_inputs(const ojson& j, const std::string& path) {
    if (!j.is_array() || j.empty())
        throw ConfigError("config: '" + path + "' must be a non-empty array of points");
    InputSet inputs;
    for (const auto& pj : j) {
        if (!pj.is_array() || pj.empty())
            throw ConfigError("config: every point in '" + path + "' must be a number array");
        std::vector<double> p;
        for (const auto& v : pj) p.push_back(v.get<double>());
        inputs.points.push_back(std::move(p));
    }
    inputs.dim = inputs.points[0].size();
    try {
        inputs.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("config: '" + path + "': " + e.what());
    }
    return inputs;
}

}  // namespace nnsym
