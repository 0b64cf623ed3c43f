#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "malimg/binary_ingest.hpp"
#include "malimg/encoders.hpp"

namespace malimg {

/// How one executable becomes one fixed-size image.
///
/// truncated: the first size*size pixels' worth of input (size*size bytes,
///   or 3*size*size bytes for threegram), zero-padded, laid out size wide.
///   For pe the full-file pixel stream is computed first, then cut.
/// resized: all bytes laid out at bin_width(file_size), then
///   nearest-neighbour resized to size x size.
struct ExtractConfig {
    Method method = Method::colormap;
    Geometry geometry = Geometry::truncated;
    std::uint32_t size = 128;
};

struct Extraction {
    MalImage image;
    std::vector<std::string> flags;  // "pe_fallback", "section_clamped"
};

/// Throws EmptyFileError on empty input.
Extraction extract_image(ByteView bytes, const ExtractConfig& config,
                         const ColorMap256& cmap = ColorMap256::plasma());

}  // namespace malimg
