#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "malimg/encoders.hpp"

namespace malimg {

/// 8-bit grayscale or RGB PNG, no alpha, no interlacing, no timestamps.
/// Output is a pure function of the pixels.
std::vector<std::uint8_t> encode_png(const MalImage& img);
void write_png(const std::filesystem::path& path, const MalImage& img);

/// Reads an 8-bit gray or RGB PNG (alpha and palettes are stripped/expanded).
/// The method tag defaults from the channel count.
MalImage read_png(const std::filesystem::path& path);
MalImage decode_png(const std::vector<std::uint8_t>& data);

}  // namespace malimg
