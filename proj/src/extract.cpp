#include "malimg/extract.hpp"

#include "malimg/errors.hpp"
#include "malimg/pe_parser.hpp"

namespace malimg {

namespace {

MalImage pe_image(ByteView bytes, const ExtractConfig& cfg, std::vector<std::string>& flags) {
    const PEFileInfo info = parse_pe_or_fallback(bytes);
    if (info.fallback) flags.emplace_back("pe_fallback");
    if (info.any_clamped()) flags.emplace_back("section_clamped");
    if (cfg.geometry == Geometry::resized) return encode_pe(info, bytes);

    auto stream = pe_pixel_stream(info, bytes);
    MalImage img;
    img.width = img.height = cfg.size;
    img.channels = 3;
    img.method = Method::pe;
    stream.resize(img.pixel_count() * 3, 0);
    img.pixels = std::move(stream);
    return img;
}

}  // namespace

Extraction extract_image(ByteView bytes, const ExtractConfig& cfg, const ColorMap256& cmap) {
    if (bytes.empty()) throw EmptyFileError("extract_image: empty file");
    if (cfg.size == 0) throw UsageError("extract_image: size must be positive");
    Extraction out;
    const bool truncated = cfg.geometry == Geometry::truncated;
    const std::size_t side = cfg.size;
    const std::uint32_t width = truncated ? cfg.size : bin_width(bytes.size());

    switch (cfg.method) {
        case Method::grayscale: {
            const Bytes cut = truncated ? truncate_pad(bytes, side * side) : Bytes(bytes.begin(), bytes.end());
            out.image = encode_grayscale(layout_grid(cut, width));
            break;
        }
        case Method::colormap: {
            const Bytes cut = truncated ? truncate_pad(bytes, side * side) : Bytes(bytes.begin(), bytes.end());
            out.image = encode_colormap(cut, cmap, width);
            break;
        }
        case Method::threegram: {
            const Bytes cut = truncated ? truncate_pad(bytes, 3 * side * side) : Bytes(bytes.begin(), bytes.end());
            out.image = encode_3gram(cut, width);
            break;
        }
        case Method::pe:
            out.image = pe_image(bytes, cfg, out.flags);
            break;
    }
    if (!truncated) out.image = resize(out.image, cfg.size, cfg.size);
    out.image.geometry = cfg.geometry;
    return out;
}

}  // namespace malimg
