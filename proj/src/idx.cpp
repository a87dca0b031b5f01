#include "nnsym/idx.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace nnsym {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    if (offset + 4 > bytes.size())
        throw std::invalid_argument("idx: truncated header");
    return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
           (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[offset + 3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

IdxDataset parse_idx(std::span<const std::uint8_t> image_bytes,
                     std::span<const std::uint8_t> label_bytes) {
    if (read_be32(image_bytes, 0) != kImageMagic)
        throw std::invalid_argument("idx: bad image magic, expected 0x00000803");
    if (read_be32(label_bytes, 0) != kLabelMagic)
        throw std::invalid_argument("idx: bad label magic, expected 0x00000801");

    IdxDataset out;
    out.count = read_be32(image_bytes, 4);
    out.rows = read_be32(image_bytes, 8);
    out.cols = read_be32(image_bytes, 12);
    const std::size_t label_count = read_be32(label_bytes, 4);
    if (label_count != out.count)
        throw std::invalid_argument("idx: image count " + std::to_string(out.count) +
                                    " != label count " + std::to_string(label_count));
    const std::size_t pixels = out.count * out.rows * out.cols;
    if (image_bytes.size() != 16 + pixels)
        throw std::invalid_argument("idx: truncated image file");
    if (label_bytes.size() != 8 + out.count)
        throw std::invalid_argument("idx: truncated label file");

    out.images.reserve(pixels);
    for (std::size_t i = 0; i < pixels; ++i)
        out.images.push_back(static_cast<double>(image_bytes[16 + i]) / 255.0);
    out.labels.reserve(out.count);
    for (std::size_t i = 0; i < out.count; ++i) {
        const std::uint8_t l = label_bytes[8 + i];
        if (l > 9)
            throw std::invalid_argument("idx: label out of range at index " +
                                        std::to_string(i));
        out.labels.push_back(l);
    }
    return out;
}

IdxBytes write_idx(const IdxDataset& data) {
    IdxBytes out;
    out.images.reserve(16 + data.images.size());
    write_be32(out.images, kImageMagic);
    write_be32(out.images, static_cast<std::uint32_t>(data.count));
    write_be32(out.images, static_cast<std::uint32_t>(data.rows));
    write_be32(out.images, static_cast<std::uint32_t>(data.cols));
    for (double v : data.images)
        out.images.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));

    out.labels.reserve(8 + data.labels.size());
    write_be32(out.labels, kLabelMagic);
    write_be32(out.labels, static_cast<std::uint32_t>(data.count));
    for (std::uint8_t l : data.labels) out.labels.push_back(l);
    return out;
}

IdxDataset load_idx_files(const std::filesystem::path& image_file,
                          const std::filesystem::path& label_file) {
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw std::runtime_error("idx: cannot open " + p.string());
        return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>());
    };
    const auto imgs = slurp(image_file);
    const auto lbls = slurp(label_file);
    return parse_idx(imgs, lbls);
}

Dataset to_dataset(const IdxDataset& idx) {
    Dataset out;
    out.feature_dim = idx.rows * idx.cols;
    out.features = idx.images;
    out.labels = idx.labels;
    out.validate();
    return out;
}

}  // namespace nnsym
