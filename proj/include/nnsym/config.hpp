#pragma once

#include <string>

#include <json.hpp>

#include "nnsym/ensembles.hpp"
#include "nnsym/symmetry.hpp"

namespace nnsym {

/// Thrown on config validation failures; message names the offending field.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Architecture from its JSON description: either an explicit layer list
///   {"input_dim":., "output_dim":., "field":"real", "layers":[...]}
/// or a named preset
///   {"preset":"gauss-net", "d":., "n":., "out_dim":., "sigma_w":., "sigma_b":.}.
/// Presets: gauss-net, relu-net, linear-net, t-net, complex-net.
ArchitectureSpec parse_architecture(const nlohmann::ordered_json& j,
                                    const std::string& path = "architecture");

/// Same description with the width hyperparameter substituted; requires a
/// preset with an "n" field.
ArchitectureSpec parse_architecture_with_width(const nlohmann::ordered_json& j,
                                               std::size_t width,
                                               const std::string& path = "architecture");

GroupSpec parse_group(const nlohmann::ordered_json& j, const std::string& path = "group");

// Field accessors with path-qualified error messages.
const nlohmann::ordered_json& require_field(const nlohmann::ordered_json& j,
                                            const std::string& key, const std::string& path);
double require_double(const nlohmann::ordered_json& j, const std::string& key,
                      const std::string& path);
std::size_t require_size(const nlohmann::ordered_json& j, const std::string& key,
                         const std::string& path);
std::string require_string(const nlohmann::ordered_json& j, const std::string& key,
                           const std::string& path);
double optional_double(const nlohmann::ordered_json& j, const std::string& key, double fallback);
std::size_t optional_size(const nlohmann::ordered_json& j, const std::string& key,
                          std::size_t fallback);
std::string optional_string(const nlohmann::ordered_json& j, const std::string& key,
                            std::string fallback);

std::vector<double> require_double_vector(const nlohmann::ordered_json& j,
                                          const std::string& key, const std::string& path);
std::vector<std::size_t> require_size_vector(const nlohmann::ordered_json& j,
                                             const std::string& key, const std::string& path);

InputSet parse_inputs(const nlohmann::ordered_json& j, const std::string& path = "inputs");

}  // namespace nnsym
