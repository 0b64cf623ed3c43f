#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "malimg/binary_ingest.hpp"

namespace malimg {

enum class RegionKind { header, section, gap, overlay, whole_file };

/// A contiguous byte range of a PE file with its byte entropy.
struct PESection {
    std::string name;
    std::uint64_t raw_offset = 0;
    std::uint64_t raw_size = 0;
    double entropy_bits = 0.0;
    RegionKind kind = RegionKind::section;
    bool clamped = false;         // declared size ran past end of file
    bool overlap_clipped = false; // start moved past the previous section's end

    std::uint64_t end() const noexcept { return raw_offset + raw_size; }
};

/// Section table of a parsed file.
///
/// `sections` holds the declared sections sorted by raw_offset, clamped to the
/// file and made non-overlapping. `regions()` tiles [0, file_size) exactly:
/// header, sections, and any unclaimed gap/overlay runs in file order.
struct PEFileInfo {
    std::uint64_t file_size = 0;
    std::vector<PESection> sections;
    PESection header_region;
    std::vector<PESection> tiling;
    bool fallback = false;  // not a parseable PE; sections = one "FILE" pseudo-section

    const std::vector<PESection>& regions() const noexcept { return tiling; }
    std::uint64_t header_size() const noexcept { return header_region.raw_size; }
    std::uint64_t unclaimed_bytes() const noexcept;
    bool any_clamped() const noexcept;
};

/// Shannon entropy in bits over byte-value frequencies, 0*log(0) = 0.
/// Throws UndefinedEntropyError on empty input.
double shannon_entropy(ByteView bytes);

/// Parses the DOS/PE/COFF headers and section table.
/// Throws NotPeError (bad MZ or PE signature) or TruncatedHeaderError.
PEFileInfo parse_pe(ByteView bytes);

/// parse_pe, or on failure a single whole-file region with fallback = true.
/// Throws EmptyFileError on empty input.
PEFileInfo parse_pe_or_fallback(ByteView bytes);

}  // namespace malimg
