#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nnsym/training.hpp"

namespace nnsym {

/// Image/label pair in the IDX format (Fashion-MNIST and friends): pixels
/// normalized to [0,1], labels in [0,9].
struct IdxDataset {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> images;         // count x rows x cols
    std::vector<std::uint8_t> labels;
};

/// Parses raw IDX bytes; validates the 0x00000803 / 0x00000801 magics,
/// header-declared sizes against file lengths, matching counts, and the
/// label range.
IdxDataset parse_idx(std::span<const std::uint8_t> image_bytes,
                     std::span<const std::uint8_t> label_bytes);

/// Serializes back to IDX bytes; parse_idx followed by write_idx reproduces
/// the original files bit for bit.
struct IdxBytes {
    std::vector<std::uint8_t> images;
    std::vector<std::uint8_t> labels;
};
IdxBytes write_idx(const IdxDataset& data);

IdxDataset load_idx_files(const std::filesystem::path& image_file,
                          const std::filesystem::path& label_file);

Dataset to_dataset(const IdxDataset& idx);

}  // namespace nnsym
