#include <doctest.h>

#include <cstring>
#include <numeric>

#include "malimg/errors.hpp"
#include "malimg/fixture.hpp"
#include "malimg/pe_parser.hpp"
#include "test_util.hpp"

using namespace malimg;

namespace {

std::uint32_t rd32(const Bytes& b, std::size_t off) {
    return b[off] | (b[off + 1] << 8) | (b[off + 2] << 16) | (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

std::uint64_t tiled_total(const PEFileInfo& info) {
    std::uint64_t sum = info.header_size() + info.unclaimed_bytes();
    for (const auto& s : info.sections) sum += s.raw_size;
    return sum;
}

}  // namespace

TEST_CASE("entropy anchors") {
    CHECK(shannon_entropy(Bytes(1024, 0)) == 0.0);
    Bytes half(1024, 0);
    std::fill(half.begin() + 512, half.end(), 0xFF);
    CHECK(shannon_entropy(half) == 1.0);
    Bytes all(256);
    std::iota(all.begin(), all.end(), 0);
    CHECK(shannon_entropy(all) == 8.0);
    CHECK_THROWS_AS(shannon_entropy(Bytes{}), UndefinedEntropyError);
}

TEST_CASE("entropy permutation and duplication invariance") {
    Rng rng(21);
    for (int t = 0; t < 100; ++t) {
        Bytes b = testutil::random_bytes(rng, 1 + rng.uniform_index(400));
        for (auto& x : b) x %= static_cast<std::uint8_t>(1 + rng.uniform_index(255));
        const double e = shannon_entropy(b);
        CHECK(e >= 0.0);
        CHECK(e <= 8.0);
        Bytes p = b;
        rng.shuffle(std::span<std::uint8_t>(p));
        CHECK(shannon_entropy(p) == e);
        Bytes dup;
        const auto k = 2 + rng.uniform_index(4);
        for (std::size_t i = 0; i < k; ++i) dup.insert(dup.end(), b.begin(), b.end());
        CHECK(shannon_entropy(dup) == e);
    }
}

TEST_CASE("two-section fixture parses to the written fields") {
    const std::vector<SectionSpec> specs{{".text", Bytes(1024, 0x90)}, {".data", Bytes(512, 0x11)}};
    const BuiltPe pe = build_pe(specs);
    REQUIRE(pe.offsets == std::vector<std::uint64_t>{512, 1536});
    REQUIRE(pe.sizes == std::vector<std::uint64_t>{1024, 512});

    // Independent reading of the fields the writer put down.
    REQUIRE(pe.bytes[0] == 'M');
    REQUIRE(pe.bytes[1] == 'Z');
    const auto pe_off = rd32(pe.bytes, 0x3C);
    REQUIRE(std::memcmp(&pe.bytes[pe_off], "PE\0\0", 4) == 0);
    const auto nsec = pe.bytes[pe_off + 6] | (pe.bytes[pe_off + 7] << 8);
    REQUIRE(nsec == 2);

    const PEFileInfo info = parse_pe(pe.bytes);
    CHECK_FALSE(info.fallback);
    CHECK(info.file_size == pe.bytes.size());
    REQUIRE(info.sections.size() == 2);
    CHECK(info.sections[0].name == ".text");
    CHECK(info.sections[0].raw_offset == 512);
    CHECK(info.sections[0].raw_size == 1024);
    CHECK(info.sections[0].entropy_bits == 0.0);
    CHECK(info.sections[1].name == ".data");
    CHECK(info.sections[1].raw_offset == 1536);
    CHECK(info.sections[1].raw_size == 512);
    CHECK(info.header_region.name == "HEADER");
    CHECK(info.header_region.raw_offset == 0);
    CHECK(info.header_size() == 512);
    CHECK(tiled_total(info) == info.file_size);
}

TEST_CASE("non-PE inputs") {
    Bytes garbage(200, 'x');
    std::memcpy(garbage.data(), "GARBAGE", 7);
    CHECK_THROWS_AS(parse_pe(garbage), NotPeError);
    CHECK_THROWS_AS(parse_pe(Bytes(10, 'M')), TruncatedHeaderError);

    Bytes far(128, 0);
    far[0] = 'M';
    far[1] = 'Z';
    far[0x3C] = 0xF0;
    far[0x3D] = 0x10;
    CHECK_THROWS_AS(parse_pe(far), TruncatedHeaderError);

    const PEFileInfo fb = parse_pe_or_fallback(garbage);
    CHECK(fb.fallback);
    REQUIRE(fb.sections.size() == 1);
    CHECK(fb.sections[0].raw_size == garbage.size());
    CHECK(fb.sections[0].entropy_bits == shannon_entropy(garbage));
    CHECK(tiled_total(fb) == fb.file_size);
    CHECK_THROWS_AS(parse_pe_or_fallback(Bytes{}), EmptyFileError);
}

TEST_CASE("section past end of file is clamped") {
    const std::vector<SectionSpec> specs{{".text", Bytes(1024, 0x41)}};
    BuiltPe pe = build_pe(specs);
    pe.bytes.resize(512 + 300);
    const PEFileInfo info = parse_pe(pe.bytes);
    REQUIRE(info.sections.size() == 1);
    CHECK(info.sections[0].clamped);
    CHECK(info.sections[0].raw_size == info.file_size - info.sections[0].raw_offset);
    CHECK(info.sections[0].raw_size == 300);
    CHECK(info.any_clamped());
    CHECK(tiled_total(info) == info.file_size);
}

TEST_CASE("overlay and gaps are counted as unclaimed") {
    const std::vector<SectionSpec> specs{{".a", Bytes(100, 1)}, {".b", Bytes(700, 2)}};
    const BuiltPe pe = build_pe(specs, 512, Bytes(333, 9));
    const PEFileInfo info = parse_pe(pe.bytes);
    CHECK(info.unclaimed_bytes() == 333);
    CHECK(tiled_total(info) == info.file_size);
    std::uint64_t pos = 0;
    for (const auto& r : info.regions()) {
        CHECK(r.raw_offset == pos);
        pos = r.end();
    }
    CHECK(pos == info.file_size);
}

TEST_CASE("size invariant over synthetic samples") {
    for (int fam = 0; fam < 6; ++fam) {
        for (int s = 0; s < 10; ++s) {
            const Bytes b = synth_sample(fam, s, 42);
            const PEFileInfo info = parse_pe_or_fallback(b);
            CHECK(tiled_total(info) == info.file_size);
            for (std::size_t i = 1; i < info.sections.size(); ++i) {
                CHECK(info.sections[i - 1].end() <= info.sections[i].raw_offset);
            }
            for (const auto& sec : info.sections) {
                CHECK(sec.end() <= info.file_size);
                CHECK(sec.entropy_bits >= 0.0);
                CHECK(sec.entropy_bits <= 8.0);
            }
        }
    }
}
