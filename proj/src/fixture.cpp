#include "malimg/fixture.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "malimg/errors.hpp"
#include "malimg/rng.hpp"

namespace malimg {

namespace {

constexpr std::uint32_t kPeOffset = 0x80;
constexpr std::uint32_t kOptionalHeaderSize = 224;
constexpr std::uint32_t kSectionAlignment = 0x1000;

constexpr std::array<const char*, 20> kFamilyNames{
    "adload",   "agent",      "alureon",     "bho",  "ceeinject", "cycbot",  "delfinject",
    "fakerean", "hotbar",     "lolyda",      "obfuscator", "onlinegames", "rbot", "renos",
    "startpage", "vobfus",    "vundo",       "winwebsec", "zbot", "zeroaccess"};

void put16(Bytes& b, std::size_t off, std::uint16_t v) {
    b[off] = static_cast<std::uint8_t>(v);
    b[off + 1] = static_cast<std::uint8_t>(v >> 8);
}

void put32(Bytes& b, std::size_t off, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b[off + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t align_up(std::uint64_t v, std::uint64_t a) { return (v + a - 1) / a * a; }

// Byte-value distribution of one family: a handful of dominant values over a
// low uniform floor, sampled through a cumulative table.
class ByteDistribution {
public:
    ByteDistribution(Rng& rng, int hot_values, double hot_mass) {
        std::array<double, 256> w{};
        w.fill((1.0 - hot_mass) / 256.0);
        for (int i = 0; i < hot_values; ++i) w[rng.uniform_index(256)] += hot_mass / hot_values;
        double acc = 0.0;
        for (std::size_t i = 0; i < 256; ++i) {
            acc += w[i];
            cdf_[i] = acc;
        }
        for (auto& c : cdf_) c /= acc;
    }

    std::uint8_t draw(Rng& rng) const {
        const double u = rng.uniform();
        std::size_t lo = 0, hi = 255;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (cdf_[mid] > u) hi = mid; else lo = mid + 1;
        }
        return static_cast<std::uint8_t>(lo);
    }

private:
    std::array<double, 256> cdf_{};
};

struct FamilyProfile {
    ByteDistribution code;
    ByteDistribution data;
    Bytes code_template;
    Bytes data_template;
    std::uint32_t text_size;
    std::uint32_t rdata_size;
    std::uint32_t data_size;
    std::uint32_t rsrc_size;  // 0 = no resource section
    double mutation;
};

FamilyProfile make_profile(int family, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(family)));
    ByteDistribution code(rng, 12, 0.7);
    ByteDistribution data(rng, 4, 0.9);
    FamilyProfile p{code, data, {}, {}, 0, 0, 0, 0, 0.0};
    p.text_size = static_cast<std::uint32_t>(4096 + 512 * rng.uniform_index(17));
    p.rdata_size = static_cast<std::uint32_t>(1024 + 512 * rng.uniform_index(9));
    p.data_size = static_cast<std::uint32_t>(512 + 512 * rng.uniform_index(9));
    p.rsrc_size = rng.uniform_index(3) == 0 ? 0 : static_cast<std::uint32_t>(2048 + 1024 * rng.uniform_index(13));
    p.mutation = 0.05 + 0.10 * rng.uniform();
    p.code_template.resize(p.text_size + 2048);
    for (auto& b : p.code_template) b = p.code.draw(rng);
    p.data_template.resize(p.data_size + 1024);
    for (auto& b : p.data_template) b = p.data.draw(rng);
    return p;
}

}  // namespace

BuiltPe build_pe(std::span<const SectionSpec> sections, std::uint32_t file_alignment, const Bytes& overlay) {
    if (file_alignment == 0) throw UsageError("build_pe: file alignment must be positive");
    if (sections.size() > 96) throw UsageError("build_pe: too many sections");
    const std::uint64_t table = kPeOffset + 4 + 20 + kOptionalHeaderSize;
    const std::uint64_t headers = align_up(table + 40 * sections.size(), file_alignment);

    BuiltPe out;
    std::uint64_t cursor = headers;
    for (const auto& s : sections) {
        out.offsets.push_back(cursor);
        out.sizes.push_back(align_up(s.data.size(), file_alignment));
        cursor += out.sizes.back();
    }
    Bytes& b = out.bytes;
    b.assign(cursor, 0);

    b[0] = 'M';
    b[1] = 'Z';
    put16(b, 0x02, 0x0090);  // bytes on last page
    put16(b, 0x04, 0x0003);  // pages
    put16(b, 0x08, 0x0004);  // header paragraphs
    put32(b, 0x3C, kPeOffset);
    static constexpr char kStub[] = "This program cannot be run in DOS mode.\r\r\n$";
    std::copy(kStub, kStub + sizeof kStub - 1, b.begin() + 0x4E);

    b[kPeOffset] = 'P';
    b[kPeOffset + 1] = 'E';
    const std::size_t coff = kPeOffset + 4;
    put16(b, coff, 0x014C);
    put16(b, coff + 2, static_cast<std::uint16_t>(sections.size()));
    put16(b, coff + 16, kOptionalHeaderSize);
    put16(b, coff + 18, 0x0102);

    const std::size_t opt = coff + 20;
    std::uint32_t code_size = 0, data_size = 0;
    for (std::size_t i = 0; i < sections.size(); ++i) {
        (i == 0 ? code_size : data_size) += static_cast<std::uint32_t>(out.sizes[i]);
    }
    const std::uint64_t image_size =
        align_up(headers, kSectionAlignment) +
        [&] {
            std::uint64_t s = 0;
            for (auto sz : out.sizes) s += align_up(std::max<std::uint64_t>(sz, 1), kSectionAlignment);
            return s;
        }();
    put16(b, opt, 0x010B);
    put32(b, opt + 4, code_size);
    put32(b, opt + 8, data_size);
    put32(b, opt + 16, kSectionAlignment);  // entry point at the first section
    put32(b, opt + 20, kSectionAlignment);
    put32(b, opt + 28, 0x00400000);  // image base
    put32(b, opt + 32, kSectionAlignment);
    put32(b, opt + 36, file_alignment);
    put16(b, opt + 40, 4);  // OS version
    put16(b, opt + 48, 4);  // subsystem version
    put32(b, opt + 56, static_cast<std::uint32_t>(image_size));
    put32(b, opt + 60, static_cast<std::uint32_t>(headers));
    put16(b, opt + 68, 2);  // GUI subsystem
    put32(b, opt + 72, 0x00100000);
    put32(b, opt + 76, 0x1000);
    put32(b, opt + 80, 0x00100000);
    put32(b, opt + 84, 0x1000);
    put32(b, opt + 92, 16);

    std::uint64_t rva = align_up(headers, kSectionAlignment);
    for (std::size_t i = 0; i < sections.size(); ++i) {
        const std::size_t e = table + 40 * i;
        const auto& name = sections[i].name;
        std::copy_n(name.begin(), std::min<std::size_t>(8, name.size()), b.begin() + static_cast<std::ptrdiff_t>(e));
        put32(b, e + 8, static_cast<std::uint32_t>(sections[i].data.size()));
        put32(b, e + 12, static_cast<std::uint32_t>(rva));
        put32(b, e + 16, static_cast<std::uint32_t>(out.sizes[i]));
        put32(b, e + 20, static_cast<std::uint32_t>(out.offsets[i]));
        put32(b, e + 36, i == 0 ? 0x60000020u : 0xC0000040u);
        std::copy(sections[i].data.begin(), sections[i].data.end(),
                  b.begin() + static_cast<std::ptrdiff_t>(out.offsets[i]));
        rva += align_up(std::max<std::uint64_t>(out.sizes[i], 1), kSectionAlignment);
    }
    b.insert(b.end(), overlay.begin(), overlay.end());
    return out;
}

std::string fixture_family_name(int index) {
    if (index >= 0 && index < static_cast<int>(kFamilyNames.size())) return kFamilyNames[static_cast<std::size_t>(index)];
    return "family" + std::to_string(index + 1);
}

Bytes synth_sample(int family, int sample, std::uint64_t seed) {
    const FamilyProfile p = make_profile(family, seed);
    Rng rng(derive_seed(seed, (static_cast<std::uint64_t>(family) << 32) | static_cast<std::uint32_t>(sample)));

    // code: the family template with point mutations; one variant in five is
    // also shifted by a few bytes
    const std::size_t shift = rng.uniform() < 0.2 ? rng.uniform_index(64) : 0;
    const std::size_t text_len = p.text_size - 512 * rng.uniform_index(3);
    Bytes text(text_len);
    for (std::size_t i = 0; i < text_len; ++i) {
        text[i] = rng.uniform() < p.mutation ? p.code.draw(rng) : p.code_template[i + shift];
    }

    Bytes rdata(p.rdata_size + 256 * rng.uniform_index(4));
    for (auto& b : rdata) b = p.code.draw(rng);

    Bytes data(p.data_size);
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = rng.uniform() < 0.2 ? p.data.draw(rng) : p.data_template[i];
    }

    std::vector<SectionSpec> sections{{".text", std::move(text)}, {".rdata", std::move(rdata)}, {".data", std::move(data)}};
    if (p.rsrc_size > 0) {
        Bytes rsrc(p.rsrc_size + 512 * rng.uniform_index(4));
        for (auto& b : rsrc) b = static_cast<std::uint8_t>(rng.next_u64());
        sections.push_back({".rsrc", std::move(rsrc)});
    }
    Bytes overlay;
    if (rng.uniform_index(4) == 0) {
        overlay.resize(128 + rng.uniform_index(1024));
        for (auto& b : overlay) b = static_cast<std::uint8_t>(rng.next_u64());
    }
    return build_pe(sections, 512, overlay).bytes;
}

std::size_t make_fixture(const std::filesystem::path& root, const FixtureConfig& cfg) {
    if (cfg.families < 1 || cfg.per_family < 1) throw UsageError("fixture: need at least one family and sample");
    std::size_t written = 0;
    auto emit = [&](const std::string& family, const std::string& file, const Bytes& bytes) {
        const auto dir = root / family;
        std::filesystem::create_directories(dir);
        std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write fixture file in " + dir.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        ++written;
    };
    char name[64];
    for (int f = 0; f < cfg.families; ++f) {
        const std::string family = fixture_family_name(f);
        for (int s = 0; s < cfg.per_family; ++s) {
            std::snprintf(name, sizeof name, "%s_%04d.exe", family.c_str(), s);
            emit(family, name, synth_sample(f, s, cfg.seed));
        }
        for (int s = 0; s < cfg.non_pe_per_family; ++s) {
            Rng rng(derive_seed(cfg.seed, 0xB0000000ULL + static_cast<std::uint64_t>(f * 4096 + s)));
            Bytes junk(2048 + rng.uniform_index(4096));
            for (auto& b : junk) b = static_cast<std::uint8_t>(rng.next_u64() & 0x7F);
            junk[0] = 'G';
            std::snprintf(name, sizeof name, "%s_raw_%04d.bin", family.c_str(), s);
            emit(family, name, junk);
        }
    }
    for (int s = 0; s < cfg.benign; ++s) {
        std::snprintf(name, sizeof name, "benign_%04d.exe", s);
        // benign samples come from a family index no malware family uses
        emit("benign", name, synth_sample(10000, s, cfg.seed));
    }
    return written;
}

std::vector<MalImage> noise_fakes(std::span<const MalImage> reals, std::size_t count, std::uint64_t seed,
                                  double sigma) {
    if (reals.empty()) throw UsageError("noise_fakes: no real images");
    const auto& ref = reals.front();
    std::vector<double> mean(ref.pixels.size(), 0.0);
    for (const auto& img : reals) {
        if (img.pixels.size() != mean.size()) throw UsageError("noise_fakes: images differ in shape");
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += img.pixels[i];
    }
    for (auto& m : mean) m /= static_cast<double>(reals.size());

    Rng rng(seed);
    std::vector<MalImage> fakes(count);
    for (auto& f : fakes) {
        f.width = ref.width;
        f.height = ref.height;
        f.channels = ref.channels;
        f.method = ref.method;
        f.geometry = ref.geometry;
        f.pixels.resize(mean.size());
        for (std::size_t i = 0; i < mean.size(); ++i) f.pixels[i] = round_to_byte(mean[i] + sigma * rng.normal());
    }
    return fakes;
}

}  // namespace malimg
