#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "malimg/binary_ingest.hpp"
#include "malimg/encoders.hpp"

namespace malimg {

struct SectionSpec {
    std::string name;  // truncated to 8 bytes
    Bytes data;
};

struct BuiltPe {
    Bytes bytes;
    std::vector<std::uint64_t> offsets;  // PointerToRawData per section
    std::vector<std::uint64_t> sizes;    // SizeOfRawData per section
};

/// Writes a minimal PE32 image: DOS header with e_lfanew = 0x80, PE
/// signature, i386 COFF header, a 224-byte optional header, the section
/// table, then each section's data zero-padded to `file_alignment`,
/// followed by `overlay` bytes.
BuiltPe build_pe(std::span<const SectionSpec> sections, std::uint32_t file_alignment = 512,
                 const Bytes& overlay = {});

struct FixtureConfig {
    int families = 10;
    int per_family = 200;
    std::uint64_t seed = 42;
    int benign = 0;             // extra samples under the reserved "benign" family
    int non_pe_per_family = 0;  // extra files per family without an MZ header
};

/// Family names used by the generator; the first 20 follow a common malware
/// corpus, later ones are "family21", "family22", ...
std::string fixture_family_name(int index);

/// One synthetic sample. Each family has its own byte-value distribution, a
/// shared code template that samples mutate, and its own section layout,
/// so families differ in both byte statistics and byte positions.
Bytes synth_sample(int family, int sample, std::uint64_t seed);

/// Writes root/<family>/<family>_<nnnn>.exe for every sample. Returns the
/// number of files written. Output depends only on the config.
std::size_t make_fixture(const std::filesystem::path& root, const FixtureConfig& config);

/// Noise-baseline fakes: per-pixel mean of `reals` plus Gaussian noise with
/// the given standard deviation, rounded and clamped to [0, 255].
std::vector<MalImage> noise_fakes(std::span<const MalImage> reals, std::size_t count, std::uint64_t seed,
                                  double sigma = 24.0);

}  // namespace malimg
