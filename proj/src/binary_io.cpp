#include "malimg/binary_io.hpp"

#include <filesystem>
#include <fstream>

#include "malimg/binary_ingest.hpp"
#include "malimg/errors.hpp"

namespace malimg {

void BinaryReader::need(std::size_t n) const {
    if (n > remaining()) throw FormatError("binary container truncated");
}

std::uint64_t BinaryReader::get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
}

void BinaryReader::expect_magic(std::string_view tag) {
    need(tag.size());
    if (std::memcmp(data_.data() + pos_, tag.data(), tag.size()) != 0) {
        throw FormatError("bad magic, expected " + std::string(tag));
    }
    pos_ += tag.size();
}

std::uint8_t BinaryReader::u8() {
    need(1);
    return data_[pos_++];
}

std::string BinaryReader::str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
}

void BinaryReader::f32s(std::span<float> out) {
    need(out.size() * 4);
    for (auto& x : out) x = f32();
}

void BinaryReader::f64s(std::span<double> out) {
    need(out.size() * 8);
    for (auto& x : out) x = f64();
}

std::vector<std::uint8_t> read_all(const std::string& path) {
    return read_file_bytes(path);
}

void write_all(const std::string& path, std::span<const std::uint8_t> bytes) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write on " + path);
}

}  // namespace malimg
