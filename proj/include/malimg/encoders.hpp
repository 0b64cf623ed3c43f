#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "malimg/binary_ingest.hpp"
#include "malimg/pe_parser.hpp"

namespace malimg {

enum class Method { grayscale, colormap, threegram, pe };
enum class Geometry { truncated, resized };

std::string_view to_string(Method m);
std::string_view to_string(Geometry g);
Method parse_method(std::string_view s);      // throws UsageError
Geometry parse_geometry(std::string_view s);  // throws UsageError

/// Row-major, channel-interleaved 8-bit image.
struct MalImage {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t channels = 1;
    std::vector<std::uint8_t> pixels;
    Method method = Method::grayscale;
    Geometry geometry = Geometry::truncated;

    std::size_t index(std::uint32_t row, std::uint32_t col, std::uint32_t ch = 0) const {
        return (static_cast<std::size_t>(row) * width + col) * channels + ch;
    }
    std::uint8_t at(std::uint32_t row, std::uint32_t col, std::uint32_t ch = 0) const {
        return pixels[index(row, col, ch)];
    }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }

    bool operator==(const MalImage&) const = default;
};

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

/// 256-colour palette viewed as a 16x16 row-major table.
class ColorMap256 {
public:
    explicit ColorMap256(const std::array<Rgb, 256>& entries) : entries_(entries) {}

    /// The built-in plasma table (identical to data/plasma.txt).
    static const ColorMap256& plasma();

    /// Reads 256 lines of "index R G B", index ascending from 0.
    static ColorMap256 load(const std::filesystem::path& path);

    const Rgb& at(std::uint32_t row, std::uint32_t col) const { return entries_[row * 16 + col]; }

    /// High nibble selects the row, low nibble the column, so this is entries_[b].
    const Rgb& lookup(std::uint8_t b) const { return at(b >> 4, b & 0x0F); }

    const std::array<Rgb, 256>& entries() const noexcept { return entries_; }

private:
    std::array<Rgb, 256> entries_;
};

/// Bytes as grayscale pixels, no value transformation.
MalImage encode_grayscale(const ByteGrid& grid);

/// One palette colour per byte, laid out at `width`; the final row is padded
/// with byte value 0 mapped through the palette.
MalImage encode_colormap(ByteView bytes, const ColorMap256& cmap, std::uint32_t width);

/// Non-overlapping byte triples become (b1, b2, 255 - b3). Missing trailing
/// bytes count as 0, as do pad pixels in the final row.
MalImage encode_3gram(ByteView bytes, std::uint32_t width);

/// Per-byte PE colouring, returned as an interleaved RGB stream with one
/// pixel per file byte: R = round(entropy * 255 / 8), G = byte,
/// B = round(region_size / file_size * 255), constant R and B per region.
std::vector<std::uint8_t> pe_pixel_stream(const PEFileInfo& info, ByteView bytes);

/// PE image laid out at bin_width(file_size) unless a width is given.
/// Pad pixels in the last row are (0, 0, 0).
MalImage encode_pe(const PEFileInfo& info, ByteView bytes,
                   std::optional<std::uint32_t> width = std::nullopt);

/// Nearest-neighbour resampling: src = floor(dst * src_dim / dst_dim) per axis.
MalImage resize(const MalImage& img, std::uint32_t out_w, std::uint32_t out_h);

/// Round half up, clamped to [0, 255].
std::uint8_t round_to_byte(double v);

}  // namespace malimg
