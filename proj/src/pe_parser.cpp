#include "malimg/pe_parser.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "malimg/errors.hpp"

namespace malimg {

namespace {

constexpr std::size_t kDosHeaderSize = 64;
constexpr std::size_t kLfanewOffset = 0x3C;
constexpr std::size_t kCoffHeaderSize = 20;
constexpr std::size_t kSectionEntrySize = 40;

std::uint16_t read_u16(ByteView b, std::size_t off) {
    return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

std::uint32_t read_u32(ByteView b, std::size_t off) {
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

double entropy_or_zero(ByteView bytes) { return bytes.empty() ? 0.0 : shannon_entropy(bytes); }

PESection make_region(ByteView bytes, std::string name, std::uint64_t offset, std::uint64_t size,
                      RegionKind kind) {
    PESection r;
    r.name = std::move(name);
    r.raw_offset = offset;
    r.raw_size = size;
    r.kind = kind;
    r.entropy_bits = entropy_or_zero(bytes.subspan(offset, size));
    return r;
}

void build_tiling(PEFileInfo& info, ByteView bytes) {
    info.tiling.clear();
    if (info.header_region.raw_size > 0) info.tiling.push_back(info.header_region);
    std::uint64_t cursor = info.header_region.raw_size;
    for (const auto& s : info.sections) {
        if (s.raw_size == 0) continue;
        if (s.raw_offset > cursor) {
            info.tiling.push_back(
                make_region(bytes, "(gap)", cursor, s.raw_offset - cursor, RegionKind::gap));
        }
        info.tiling.push_back(s);
        cursor = s.end();
    }
    if (cursor < info.file_size) {
        info.tiling.push_back(
            make_region(bytes, "(overlay)", cursor, info.file_size - cursor, RegionKind::overlay));
    }
}

}  // namespace

double shannon_entropy(ByteView bytes) {
    if (bytes.empty()) throw UndefinedEntropyError("shannon_entropy: empty input");
    std::array<std::uint64_t, 256> counts{};
    for (auto b : bytes) ++counts[b];
    const auto n = static_cast<double>(bytes.size());
    double h = 0.0;
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    return std::clamp(h, 0.0, 8.0);
}

std::uint64_t PEFileInfo::unclaimed_bytes() const noexcept {
    std::uint64_t total = 0;
    for (const auto& r : tiling) {
        if (r.kind == RegionKind::gap || r.kind == RegionKind::overlay) total += r.raw_size;
    }
    return total;
}

bool PEFileInfo::any_clamped() const noexcept {
    return std::any_of(sections.begin(), sections.end(),
                       [](const PESection& s) { return s.clamped; });
}

PEFileInfo parse_pe(ByteView bytes) {
    if (bytes.size() < kDosHeaderSize) {
        throw TruncatedHeaderError("parse_pe: shorter than a DOS header");
    }
    if (bytes[0] != 'M' || bytes[1] != 'Z') throw NotPeError("parse_pe: missing MZ signature");

    const std::uint64_t pe_off = read_u32(bytes, kLfanewOffset);
    if (pe_off + 4 + kCoffHeaderSize > bytes.size()) {
        throw TruncatedHeaderError("parse_pe: PE header offset beyond end of file");
    }
    if (bytes[pe_off] != 'P' || bytes[pe_off + 1] != 'E' || bytes[pe_off + 2] != 0 ||
        bytes[pe_off + 3] != 0) {
        throw NotPeError("parse_pe: missing PE\\0\\0 signature");
    }
    const std::uint64_t coff = pe_off + 4;
    const std::uint16_t n_sections = read_u16(bytes, coff + 2);
    const std::uint16_t opt_size = read_u16(bytes, coff + 16);
    const std::uint64_t table = coff + kCoffHeaderSize + opt_size;
    if (table + static_cast<std::uint64_t>(n_sections) * kSectionEntrySize > bytes.size()) {
        throw TruncatedHeaderError("parse_pe: section table runs past end of file");
    }

    PEFileInfo info;
    info.file_size = bytes.size();
    info.sections.reserve(n_sections);
    for (std::uint16_t i = 0; i < n_sections; ++i) {
        const std::uint64_t e = table + static_cast<std::uint64_t>(i) * kSectionEntrySize;
        PESection s;
        const auto* name = reinterpret_cast<const char*>(bytes.data() + e);
        s.name.assign(name, std::find(name, name + 8, '\0'));
        s.raw_size = read_u32(bytes, e + 16);
        s.raw_offset = read_u32(bytes, e + 20);
        if (s.raw_offset > info.file_size) {
            s.raw_offset = info.file_size;
            s.raw_size = 0;
            s.clamped = true;
        } else if (s.raw_size > info.file_size - s.raw_offset) {
            s.raw_size = info.file_size - s.raw_offset;
            s.clamped = true;
        }
        info.sections.push_back(std::move(s));
    }
    std::stable_sort(info.sections.begin(), info.sections.end(),
                     [](const PESection& a, const PESection& b) { return a.raw_offset < b.raw_offset; });

    std::uint64_t first = info.file_size;
    std::uint64_t prev_end = 0;
    bool seen = false;
    for (auto& s : info.sections) {
        if (s.raw_size == 0) continue;
        if (seen && s.raw_offset < prev_end) {
            const std::uint64_t cut = std::min(prev_end - s.raw_offset, s.raw_size);
            s.raw_offset += cut;
            s.raw_size -= cut;
            s.overlap_clipped = true;
            if (s.raw_size == 0) continue;
        }
        if (!seen) first = s.raw_offset;
        seen = true;
        prev_end = s.end();
    }
    for (auto& s : info.sections) {
        s.entropy_bits = entropy_or_zero(bytes.subspan(s.raw_offset, s.raw_size));
    }
    info.header_region = make_region(bytes, "HEADER", 0, first, RegionKind::header);
    build_tiling(info, bytes);
    return info;
}

PEFileInfo parse_pe_or_fallback(ByteView bytes) {
    if (bytes.empty()) throw EmptyFileError("parse_pe_or_fallback: empty input");
    try {
        return parse_pe(bytes);
    } catch (const NotPeError&) {
    } catch (const TruncatedHeaderError&) {
    }
    PEFileInfo info;
    info.file_size = bytes.size();
    info.fallback = true;
    info.sections.push_back(make_region(bytes, "FILE", 0, bytes.size(), RegionKind::whole_file));
    info.tiling = info.sections;
    return info;
}

}  // namespace malimg
