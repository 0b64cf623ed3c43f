#include "malimg/binary_ingest.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>

#include "malimg/errors.hpp"

namespace malimg {

namespace {

constexpr std::array<WidthBin, 8> kBins{{
    {10 * kKiB, 32},
    {30 * kKiB, 64},
    {60 * kKiB, 128},
    {100 * kKiB, 256},
    {200 * kKiB, 384},
    {500 * kKiB, 512},
    {1000 * kKiB, 768},
    {std::numeric_limits<std::uint64_t>::max(), 1024},
}};

}  // namespace

std::span<const WidthBin> width_bins() { return kBins; }

std::uint32_t bin_width(std::uint64_t size_bytes) {
    if (size_bytes == 0) throw EmptyFileError("bin_width: file is empty");
    for (const auto& bin : kBins) {
        if (size_bytes <= bin.upper_bytes) return bin.width;
    }
    return kBins.back().width;
}

Bytes truncate_pad(ByteView bytes, std::size_t target_len) {
    Bytes out(target_len, 0);
    const std::size_t n = std::min(bytes.size(), target_len);
    std::copy_n(bytes.begin(), n, out.begin());
    return out;
}

ByteGrid layout_grid(ByteView bytes, std::uint32_t width) {
    if (width == 0) throw UsageError("layout_grid: width must be positive");
    if (bytes.empty()) throw EmptyFileError("layout_grid: no bytes to lay out");
    ByteGrid grid;
    grid.width = width;
    grid.height = static_cast<std::uint32_t>((bytes.size() + width - 1) / width);
    grid.data = truncate_pad(bytes, static_cast<std::size_t>(grid.width) * grid.height);
    return grid;
}

Bytes read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto end = in.tellg();
    if (end < 0) throw IoError("cannot size " + path.string());
    Bytes bytes(static_cast<std::size_t>(end));
    in.seekg(0, std::ios::beg);
    if (!bytes.empty() &&
        !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
        throw IoError("short read on " + path.string());
    }
    return bytes;
}

RawBinary load_binary(const std::filesystem::path& path, std::string family) {
    return RawBinary{path, std::move(family), read_file_bytes(path)};
}

}  // namespace malimg
