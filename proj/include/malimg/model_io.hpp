#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "malimg/classifier.hpp"

namespace malimg {

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// "MIMM" container: magic, u32 version, u32 model-kind tag, then the
/// model's payload (hyperparameters first, parameters after). All integers
/// and reals little-endian; reals stored as raw IEEE-754 bits, so a
/// save/load/save cycle is byte-identical.
std::vector<std::uint8_t> save_model(const Classifier& model);
std::unique_ptr<Classifier> load_model(std::span<const std::uint8_t> bytes);

void save_model_file(const std::filesystem::path& path, const Classifier& model);
std::unique_ptr<Classifier> load_model_file(const std::filesystem::path& path);

}  // namespace malimg
