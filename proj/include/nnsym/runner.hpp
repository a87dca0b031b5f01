#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nnsym/serialize.hpp"

namespace nnsym {

struct RunOptions {
    std::string subcommand;
    json config;
    std::uint64_t seed = 0;
    int workers = 1;
    std::optional<std::size_t> samples_override;
    std::filesystem::path out_dir;
    std::filesystem::path data_dir;  // dataset directory (flag or NNSYM_DATA_DIR)
};

const std::vector<std::string>& subcommand_names();

/// Validates, computes, then writes manifest.json / result.json / result.csv
/// under out_dir. Nothing is written until the run has finished, so a
/// rejected config leaves no artifacts. Throws ConfigError on bad configs.
void run_subcommand(const RunOptions& options);

/// Rebuilds the options recorded in a run manifest, pointed at a new output
/// directory; rerunning reproduces result.json byte for byte.
RunOptions options_from_manifest(const std::filesystem::path& manifest_path,
                                 std::filesystem::path out_dir);

}  // namespace nnsym
