#include "malimg/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>
#include <fstream>

#include "malimg/errors.hpp"

namespace malimg {

namespace {

struct ReadCursor {
    const std::vector<std::uint8_t>* data;
    std::size_t pos;
};

void on_png_warning(png_structp, png_const_charp) {}

void append_bytes(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + len);
}

void flush_nothing(png_structp) {}

void read_bytes(png_structp png, png_bytep data, png_size_t len) {
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->pos + len > cur->data->size()) png_error(png, "unexpected end of data");
    std::memcpy(data, cur->data->data() + cur->pos, len);
    cur->pos += len;
}

// libpng reports errors by longjmp; no object with a destructor may be
// created between setjmp and the last libpng call in these two functions.
bool write_rows(png_structp png, png_infop info, const MalImage& img) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_set_IHDR(png, info, img.width, img.height, 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    for (std::uint32_t r = 0; r < img.height; ++r) {
        png_write_row(png, const_cast<png_bytep>(img.pixels.data() + r * stride));
    }
    png_write_end(png, nullptr);
    return true;
}

bool read_header(png_structp png, png_infop info) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    return true;
}

bool read_body(png_structp png, png_bytepp rows) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_read_image(png, rows);
    png_read_end(png, nullptr);
    return true;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const MalImage& img) {
    if (img.channels != 1 && img.channels != 3) throw UsageError("encode_png: 1 or 3 channels");
    if (img.pixels.size() != img.pixel_count() * img.channels || img.pixel_count() == 0) {
        throw UsageError("encode_png: pixel buffer does not match dimensions");
    }
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, on_png_warning);
    if (!png) throw Error("png: cannot allocate writer");
    png_infop info = png_create_info_struct(png);
    png_set_write_fn(png, &out, append_bytes, flush_nothing);
    const bool ok = info != nullptr && write_rows(png, info, img);
    png_destroy_write_struct(&png, &info);
    if (!ok) throw Error("png: encoding failed");
    return out;
}

void write_png(const std::filesystem::path& path, const MalImage& img) {
    const auto data = encode_png(img);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("short write on " + path.string());
}

MalImage decode_png(const std::vector<std::uint8_t>& data) {
    if (data.size() < 8 || png_sig_cmp(data.data(), 0, 8) != 0) throw FormatError("png: bad signature");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, on_png_warning);
    if (!png) throw Error("png: cannot allocate reader");
    png_infop info = png_create_info_struct(png);
    ReadCursor cursor{&data, 0};
    png_set_read_fn(png, &cursor, read_bytes);

    MalImage img;
    std::vector<png_bytep> rows;
    bool ok = info != nullptr && read_header(png, info);
    if (ok) {
        img.width = png_get_image_width(png, info);
        img.height = png_get_image_height(png, info);
        img.channels = png_get_channels(png, info);
        ok = img.channels == 1 || img.channels == 3;
    }
    if (ok) {
        img.method = img.channels == 1 ? Method::grayscale : Method::colormap;
        img.pixels.resize(img.pixel_count() * img.channels);
        rows.resize(img.height);
        const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
        for (std::uint32_t r = 0; r < img.height; ++r) rows[r] = img.pixels.data() + r * stride;
        ok = read_body(png, rows.data());
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (!ok) throw FormatError("png: malformed or unsupported image");
    return img;
}

MalImage read_png(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_png(data);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace malimg
