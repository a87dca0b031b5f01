#include "nnsym/serialize.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

namespace nnsym {

namespace {

json slots_to_json(const std::vector<Slot>& slots) {
    json arr = json::array();
    for (const Slot& s : slots) {
        json j;
        j["point"] = s.point;
        j["conjugate"] = s.conjugate;
        arr.push_back(j);
    }
    return arr;
}

json tensor_to_json(const RTensor& t) {
    json j;
    j["shape"] = t.shape();
    j["entries"] = std::vector<double>(t.data().begin(), t.data().end());
    return j;
}

json tensor_to_json(const CTensor& t) {
    json j;
    j["shape"] = t.shape();
    json entries = json::array();
    for (const cplx& v : t.data()) entries.push_back({v.real(), v.imag()});
    j["entries"] = entries;
    return j;
}

json matrix_to_json(const RMatrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

template <typename T>
json correlator_to_json(const CorrelatorTensor<T>& t) {
    json j;
    j["order"] = t.order();
    j["shape"] = t.mean.shape();
    j["slots"] = slots_to_json(t.slots);
    j["mean"] = tensor_to_json(t.mean)["entries"];
    j["stderr"] = std::vector<double>(t.std_error.data().begin(), t.std_error.data().end());
    j["sample_count"] = t.sample_count;
    j["seed"] = t.seed;
    j["stream_id"] = t.stream_id;
    j["workers"] = t.workers;
    return j;
}

}  // namespace

json to_json(const CorrelatorTensor<double>& t) { return correlator_to_json(t); }
json to_json(const CorrelatorTensor<cplx>& t) { return correlator_to_json(t); }

json to_json(const Kernel& k) {
    json j;
    j["points"] = k.inputs.points;
    j["values"] = matrix_to_json(k.values);
    j["stderr"] = matrix_to_json(k.std_error);
    j["sample_count"] = k.sample_count;
    return j;
}

json to_json(const DeviationReport& r) {
    json j;
    j["tensor_order"] = r.tensor_order;
    j["experiments"] = r.experiment_count;
    j["group_elements"] = r.element_count;
    j["mu_m"] = r.mu_m;
    j["sigma_m"] = r.sigma_m;
    j["delta_m"] = r.delta_m;
    j["delta_g"] = r.delta_g;
    j["delta_g_prime"] = r.delta_g_prime;
    j["delta_r"] = r.delta_r;
    j["band_multiplier"] = r.band_multiplier;
    j["pass_fraction"] = r.pass_fraction;
    j["error_formula"] = r.formula;
    return j;
}

json to_json(const GpLimitReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        json jr;
        jr["width"] = row.width;
        jr["max_sigma"] = row.max_sigma;
        jr["frac_within_4sigma"] = row.frac_within_4sigma;
        jr["elements"] = row.elements;
        rows.push_back(jr);
    }
    json j;
    j["rows"] = rows;
    j["max_sigma_decreasing"] = r.max_sigma_decreasing;
    return j;
}

json to_json(const EnsembleNTK& t) {
    json j;
    j["mean"] = matrix_to_json(t.mean);
    j["stderr"] = matrix_to_json(t.std_error);
    j["sample_count"] = t.sample_count;
    return j;
}

json to_json(const FlowCheckReport& r) {
    json j;
    j["invariant_1pt"] = to_json(r.invariant_1pt);
    j["invariant_2pt"] = to_json(r.invariant_2pt);
    j["mse_1pt"] = to_json(r.mse_1pt);
    j["invariant_loss_final"] = r.invariant_loss_final;
    j["mse_loss_final"] = r.mse_loss_final;
    return j;
}

std::string config_hash(const json& config) {
    const std::string dump = config.dump();
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string csv_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) text_ += ',';
        text_ += header[i];
    }
    text_ += '\n';
}

void CsvWriter::add_row(std::vector<std::string> cells) {
    if (cells.size() != columns_)
        throw std::invalid_argument("csv: row width " + std::to_string(cells.size()) +
                                    " != header width " + std::to_string(columns_));
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) text_ += ',';
        text_ += cells[i];
    }
    text_ += '\n';
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace nnsym
