#include "malimg/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "malimg/errors.hpp"

namespace malimg {

namespace {

constexpr std::array<Rgb, 256> kPlasma{{
#include "plasma_table.inc"
}};

void require_width(std::uint32_t width, const char* who) {
    if (width == 0) throw UsageError(std::string(who) + ": width must be positive");
}

std::uint32_t rows_for(std::size_t pixels, std::uint32_t width) {
    return static_cast<std::uint32_t>((pixels + width - 1) / width);
}

}  // namespace

std::string_view to_string(Method m) {
    switch (m) {
        case Method::grayscale: return "grayscale";
        case Method::colormap: return "colormap";
        case Method::threegram: return "threegram";
        case Method::pe: return "pe";
    }
    return "?";
}

std::string_view to_string(Geometry g) {
    return g == Geometry::truncated ? "truncated" : "resized";
}

Method parse_method(std::string_view s) {
    if (s == "grayscale") return Method::grayscale;
    if (s == "colormap") return Method::colormap;
    if (s == "threegram" || s == "3gram") return Method::threegram;
    if (s == "pe") return Method::pe;
    throw UsageError("unknown method '" + std::string(s) + "'");
}

Geometry parse_geometry(std::string_view s) {
    if (s == "truncated") return Geometry::truncated;
    if (s == "resized") return Geometry::resized;
    throw UsageError("unknown geometry '" + std::string(s) + "'");
}

std::uint8_t round_to_byte(double v) {
    const double r = std::floor(v + 0.5);
    return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

const ColorMap256& ColorMap256::plasma() {
    static const ColorMap256 table(kPlasma);
    return table;
}

ColorMap256 ColorMap256::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open colormap " + path.string());
    std::array<Rgb, 256> entries{};
    std::string line;
    int expected = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        int idx, r, g, b;
        if (!(fields >> idx >> r >> g >> b) || idx != expected || expected >= 256 ||
            std::min({r, g, b}) < 0 || std::max({r, g, b}) > 255) {
            throw FormatError("colormap line " + std::to_string(expected) + " malformed: " + line);
        }
        entries[idx] = Rgb{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                           static_cast<std::uint8_t>(b)};
        ++expected;
    }
    if (expected != 256) throw FormatError("colormap needs exactly 256 entries");
    return ColorMap256(entries);
}

MalImage encode_grayscale(const ByteGrid& grid) {
    if (grid.width == 0 || grid.height == 0 ||
        grid.data.size() != static_cast<std::size_t>(grid.width) * grid.height) {
        throw UsageError("encode_grayscale: malformed grid");
    }
    MalImage img;
    img.width = grid.width;
    img.height = grid.height;
    img.channels = 1;
    img.method = Method::grayscale;
    img.pixels = grid.data;
    return img;
}

MalImage encode_colormap(ByteView bytes, const ColorMap256& cmap, std::uint32_t width) {
    require_width(width, "encode_colormap");
    if (bytes.empty()) throw EmptyFileError("encode_colormap: no bytes");
    MalImage img;
    img.width = width;
    img.height = rows_for(bytes.size(), width);
    img.channels = 3;
    img.method = Method::colormap;
    img.pixels.resize(img.pixel_count() * 3);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const Rgb& c = cmap.lookup(i < bytes.size() ? bytes[i] : std::uint8_t{0});
        img.pixels[3 * i] = c.r;
        img.pixels[3 * i + 1] = c.g;
        img.pixels[3 * i + 2] = c.b;
    }
    return img;
}

MalImage encode_3gram(ByteView bytes, std::uint32_t width) {
    require_width(width, "encode_3gram");
    if (bytes.empty()) throw EmptyFileError("encode_3gram: no bytes");
    const std::size_t used = (bytes.size() + 2) / 3;
    MalImage img;
    img.width = width;
    img.height = rows_for(used, width);
    img.channels = 3;
    img.method = Method::threegram;
    img.pixels.resize(img.pixel_count() * 3);
    auto byte_at = [&](std::size_t i) -> std::uint8_t { return i < bytes.size() ? bytes[i] : 0; };
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        img.pixels[3 * p] = byte_at(3 * p);
        img.pixels[3 * p + 1] = byte_at(3 * p + 1);
        img.pixels[3 * p + 2] = static_cast<std::uint8_t>(255 - byte_at(3 * p + 2));
    }
    return img;
}

std::vector<std::uint8_t> pe_pixel_stream(const PEFileInfo& info, ByteView bytes) {
    if (info.file_size != bytes.size()) {
        throw UsageError("encode_pe: section info does not match the byte buffer");
    }
    if (bytes.empty()) throw EmptyFileError("encode_pe: no bytes");
    std::vector<std::uint8_t> rgb(bytes.size() * 3);
    const std::uint64_t total = info.file_size;
    for (const auto& region : info.regions()) {
        const std::uint8_t red = round_to_byte(region.entropy_bits * 255.0 / 8.0);
        // round-half-up of size * 255 / total, in exact integer arithmetic
        const std::uint64_t blue64 = (2 * region.raw_size * 255 + total) / (2 * total);
        const auto blue = static_cast<std::uint8_t>(std::min<std::uint64_t>(blue64, 255));
        for (std::uint64_t p = region.raw_offset; p < region.end(); ++p) {
            rgb[3 * p] = red;
            rgb[3 * p + 1] = bytes[p];
            rgb[3 * p + 2] = blue;
        }
    }
    return rgb;
}

MalImage encode_pe(const PEFileInfo& info, ByteView bytes, std::optional<std::uint32_t> width) {
    const std::uint32_t w = width.value_or(bin_width(bytes.size()));
    require_width(w, "encode_pe");
    auto stream = pe_pixel_stream(info, bytes);
    MalImage img;
    img.width = w;
    img.height = rows_for(bytes.size(), w);
    img.channels = 3;
    img.method = Method::pe;
    stream.resize(img.pixel_count() * 3, 0);
    img.pixels = std::move(stream);
    return img;
}

MalImage resize(const MalImage& img, std::uint32_t out_w, std::uint32_t out_h) {
    if (out_w == 0 || out_h == 0) throw UsageError("resize: output dimensions must be positive");
    if (img.width == 0 || img.height == 0) throw UsageError("resize: empty source image");
    MalImage out;
    out.width = out_w;
    out.height = out_h;
    out.channels = img.channels;
    out.method = img.method;
    out.geometry = img.geometry;
    out.pixels.resize(out.pixel_count() * out.channels);
    for (std::uint32_t r = 0; r < out_h; ++r) {
        const auto sr = static_cast<std::uint32_t>(static_cast<std::uint64_t>(r) * img.height / out_h);
        for (std::uint32_t c = 0; c < out_w; ++c) {
            const auto sc = static_cast<std::uint32_t>(static_cast<std::uint64_t>(c) * img.width / out_w);
            for (std::uint32_t ch = 0; ch < img.channels; ++ch) {
                out.pixels[out.index(r, c, ch)] = img.at(sr, sc, ch);
            }
        }
    }
    return out;
}

}  // namespace malimg
