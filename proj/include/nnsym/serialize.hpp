#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "nnsym/correlators.hpp"
#include "nnsym/symmetry.hpp"
#include "nnsym/training.hpp"

namespace nnsym {

using json = nlohmann::ordered_json;

json to_json(const CorrelatorTensor<double>& t);
json to_json(const CorrelatorTensor<cplx>& t);
json to_json(const Kernel& k);
json to_json(const DeviationReport& r);
json to_json(const GpLimitReport& r);
json to_json(const EnsembleNTK& t);
json to_json(const FlowCheckReport& r);

/// FNV-1a over the canonical dump; stable identity for run manifests.
std::string config_hash(const json& config);

/// Shortest-round-trip double formatting shared by every CSV emitter.
std::string csv_double(double v);

/// Minimal CSV builder with a frozen header.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void add_row(std::vector<std::string> cells);
    const std::string& text() const { return text_; }

private:
    std::size_t columns_;
    std::string text_;
};

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace nnsym
