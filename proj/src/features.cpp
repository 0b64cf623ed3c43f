#include "malimg/features.hpp"

#include <cmath>
#include <fstream>

#include "malimg/binary_io.hpp"
#include "malimg/errors.hpp"

namespace malimg {

namespace {
constexpr std::uint32_t kMatrixVersion = 1;
constexpr std::uint32_t kNormalizerVersion = 1;
}  // namespace

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> idx) const {
    FeatureMatrix out(idx.size(), cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto src = row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

std::vector<float> flatten(const MalImage& img) {
    return {img.pixels.begin(), img.pixels.end()};
}

FeatureMatrix stack_images(std::span<const MalImage> images) {
    if (images.empty()) return {};
    const auto cols = images[0].pixels.size();
    FeatureMatrix m(images.size(), cols);
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].pixels.size() != cols) throw UsageError("stack_images: images differ in shape");
        std::copy(images[i].pixels.begin(), images[i].pixels.end(), m.row(i).begin());
    }
    return m;
}

Normalizer::Normalizer(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
    if (mean_.size() != stddev_.size()) throw UsageError("Normalizer: mean/std length mismatch");
}

Normalizer Normalizer::fit(const FeatureMatrix& train) {
    if (train.rows == 0 || train.cols == 0) throw UsageError("Normalizer::fit: empty training matrix");
    std::vector<double> mean(train.cols, 0.0);
    std::vector<double> var(train.cols, 0.0);
    for (std::size_t r = 0; r < train.rows; ++r) {
        const auto x = train.row(r);
        for (std::size_t c = 0; c < train.cols; ++c) mean[c] += x[c];
    }
    const auto n = static_cast<double>(train.rows);
    for (auto& m : mean) m /= n;
    for (std::size_t r = 0; r < train.rows; ++r) {
        const auto x = train.row(r);
        for (std::size_t c = 0; c < train.cols; ++c) {
            const double d = x[c] - mean[c];
            var[c] += d * d;
        }
    }
    for (auto& v : var) v = std::sqrt(v / n);
    return Normalizer(std::move(mean), std::move(var));
}

void Normalizer::check(std::size_t cols) const {
    if (!fitted()) throw UsageError("Normalizer: not fitted");
    if (cols != mean_.size()) throw UsageError("Normalizer: dimension mismatch");
}

std::vector<double> Normalizer::apply(std::span<const float> x) const {
    check(x.size());
    std::vector<double> out(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) {
        out[c] = stddev_[c] > 0.0 ? (x[c] - mean_[c]) / stddev_[c] : 0.0;
    }
    return out;
}

void Normalizer::apply_inplace(FeatureMatrix& m) const {
    check(m.cols);
    for (std::size_t r = 0; r < m.rows; ++r) {
        auto x = m.row(r);
        for (std::size_t c = 0; c < m.cols; ++c) {
            x[c] = stddev_[c] > 0.0 ? static_cast<float>((x[c] - mean_[c]) / stddev_[c]) : 0.0f;
        }
    }
}

std::vector<std::uint8_t> Normalizer::serialize() const {
    BinaryWriter w;
    w.magic("MIMN");
    w.u32(kNormalizerVersion);
    w.u64(mean_.size());
    w.f64s(mean_);
    w.f64s(stddev_);
    return w.take();
}

Normalizer Normalizer::deserialize(std::span<const std::uint8_t> bytes) {
    BinaryReader r(bytes);
    r.expect_magic("MIMN");
    if (r.u32() != kNormalizerVersion) throw FormatError("normalizer: unsupported version");
    const auto n = r.u64();
    if (n > r.remaining() / 16) throw FormatError("normalizer: truncated");
    std::vector<double> mean(n), sd(n);
    r.f64s(mean);
    r.f64s(sd);
    return Normalizer(std::move(mean), std::move(sd));
}

void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& m) {
    BinaryWriter w;
    w.magic("MIMF");
    w.u32(kMatrixVersion);
    w.u64(m.rows);
    w.u64(m.cols);
    w.f32s(m.values);
    write_all(path.string(), w.bytes());

    std::ofstream hdr(path.string() + ".hdr", std::ios::trunc);
    if (!hdr) throw IoError("cannot write " + path.string() + ".hdr");
    hdr << "format=malimg-feature-matrix\nversion=" << kMatrixVersion << "\nrows=" << m.rows
        << "\ncols=" << m.cols << "\ndtype=float32-le\norder=row-major\ndata_offset=24\n";
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
    const auto bytes = read_all(path.string());
    BinaryReader r(bytes);
    r.expect_magic("MIMF");
    if (r.u32() != kMatrixVersion) throw FormatError("feature matrix: unsupported version");
    const auto rows = r.u64();
    const auto cols = r.u64();
    if (cols != 0 && rows > r.remaining() / 4 / cols) throw FormatError("feature matrix: truncated");
    FeatureMatrix m(rows, cols);
    r.f32s(m.values);
    return m;
}

}  // namespace malimg
