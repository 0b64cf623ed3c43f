#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "malimg/encoders.hpp"

namespace malimg {

/// Dense row-major float32 matrix, one sample per row.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;

    FeatureMatrix() = default;
    FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0f) {}

    std::span<const float> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
    std::span<float> row(std::size_t i) { return {values.data() + i * cols, cols}; }
    float operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    /// Rows picked by index, in the given order.
    FeatureMatrix select_rows(std::span<const std::size_t> idx) const;
};

/// Row-major, channel-interleaved pixel values.
std::vector<float> flatten(const MalImage& img);

/// Stacks flattened images; all images must share a shape.
FeatureMatrix stack_images(std::span<const MalImage> images);

/// Column-wise standardisation x' = (x - mean) / std, fitted on one matrix.
///
/// Uses the population standard deviation; columns with zero spread map to 0.
class Normalizer {
public:
    Normalizer() = default;
    Normalizer(std::vector<double> mean, std::vector<double> stddev);

    static Normalizer fit(const FeatureMatrix& train);

    bool fitted() const noexcept { return !mean_.empty(); }
    std::size_t dims() const noexcept { return mean_.size(); }
    const std::vector<double>& mean() const noexcept { return mean_; }
    const std::vector<double>& stddev() const noexcept { return stddev_; }

    /// Throws UsageError when unfitted or on dimension mismatch.
    std::vector<double> apply(std::span<const float> x) const;
    void apply_inplace(FeatureMatrix& m) const;

    std::vector<std::uint8_t> serialize() const;
    static Normalizer deserialize(std::span<const std::uint8_t> bytes);

private:
    void check(std::size_t cols) const;
    std::vector<double> mean_;
    std::vector<double> stddev_;
};

/// "MIMF" container: magic, u32 version, u64 rows, u64 cols, then
/// rows*cols float32 little-endian, row-major. write_feature_matrix also
/// writes a text sidecar at path + ".hdr".
void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);

}  // namespace malimg
