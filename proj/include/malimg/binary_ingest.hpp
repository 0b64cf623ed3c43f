#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace malimg {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline constexpr std::uint64_t kKiB = 1024;

/// One executable's bytes with provenance.
struct RawBinary {
    std::filesystem::path path;
    std::string family;
    Bytes bytes;

    std::uint64_t size_bytes() const noexcept { return bytes.size(); }
};

/// Row-major byte raster; data.size() == width * height.
struct ByteGrid {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    Bytes data;

    std::uint8_t at(std::uint32_t row, std::uint32_t col) const {
        return data[static_cast<std::size_t>(row) * width + col];
    }
};

/// Image width for a file of the given size, by KiB bin:
/// (0,10]->32, (10,30]->64, (30,60]->128, (60,100]->256,
/// (100,200]->384, (200,500]->512, (500,1000]->768, above->1024.
/// Throws EmptyFileError for size 0.
std::uint32_t bin_width(std::uint64_t size_bytes);

/// Upper bin edges in bytes, paired with their widths. The last bin is open.
struct WidthBin {
    std::uint64_t upper_bytes;  // inclusive; UINT64_MAX for the open bin
    std::uint32_t width;
};
std::span<const WidthBin> width_bins();

/// First target_len bytes of the input, zero-padded if the input is shorter.
Bytes truncate_pad(ByteView bytes, std::size_t target_len);

/// Lays bytes out row-major at a fixed width; the last row is zero-padded.
ByteGrid layout_grid(ByteView bytes, std::uint32_t width);

Bytes read_file_bytes(const std::filesystem::path& path);

RawBinary load_binary(const std::filesystem::path& path, std::string family);

}  // namespace malimg
