#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>

#include <png.h>

#include "container.hpp"
#include "gaga/errors.hpp"
#include "gaga/io.hpp"

namespace gaga {

namespace {

struct WriteSink {
    std::vector<std::uint8_t> bytes;
};

struct ReadSource {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

[[noreturn]] void on_error(png_structp png, png_const_charp message) {
    auto* msg = static_cast<std::string*>(png_get_error_ptr(png));
    if (msg) *msg = message;
    png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

void write_callback(png_structp png, png_bytep data, png_size_t length) {
    auto* sink = static_cast<WriteSink*>(png_get_io_ptr(png));
    sink->bytes.insert(sink->bytes.end(), data, data + length);
}

void flush_callback(png_structp) {}

void read_callback(png_structp png, png_bytep data, png_size_t length) {
    auto* src = static_cast<ReadSource*>(png_get_io_ptr(png));
    if (src->bytes.size() - src->offset < length) png_error(png, "unexpected end of data");
    std::memcpy(data, src->bytes.data() + src->offset, length);
    src->offset += length;
}

// Writes rows of `bytes_per_row` with the given colour type and depth.
std::vector<std::uint8_t> encode(int width, int height, int color_type, int depth, const std::uint8_t* rows,
                                 std::size_t bytes_per_row) {
    std::string message;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, on_error, on_warning);
    if (!png) throw std::runtime_error("png: cannot allocate writer");
    png_infop info = png_create_info_struct(png);
    WriteSink sink;
    std::vector<png_const_bytep> row_ptrs(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) row_ptrs[y] = rows + static_cast<std::size_t>(y) * bytes_per_row;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png encode failed: " + message);
    }
    png_set_write_fn(png, &sink, write_callback, flush_callback);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    // Fixed settings keep the encoded bytes stable across runs.
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_write_info(png, info);
    if (depth == 16) png_set_swap(png);  // rows are host (little-endian) order
    png_write_rows(png, const_cast<png_bytepp>(row_ptrs.data()), static_cast<png_uint_32>(height));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return std::move(sink.bytes);
}

struct Decoded {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rows;
};

Decoded decode(std::span<const std::uint8_t> bytes, int want_color, int want_depth) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("png", "not a PNG file");
    std::string message;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, on_error, on_warning);
    if (!png) throw std::runtime_error("png: cannot allocate reader");
    png_infop info = png_create_info_struct(png);
    ReadSource src{bytes, 0};
    Decoded out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png", "malformed PNG: " + message);
    }
    png_set_read_fn(png, &src, read_callback);
    png_read_info(png, info);
    png_uint_32 w = 0, h = 0;
    int depth = 0, color = 0;
    png_get_IHDR(png, info, &w, &h, &depth, &color, nullptr, nullptr, nullptr);
    if (want_depth == 8) {
        if (depth == 16) png_set_strip_16(png);
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
            if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
            png_set_gray_to_rgb(png);
        }
        if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png), png_set_strip_alpha(png);
    } else if (color != want_color || depth != want_depth) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png", "expected a 16-bit grayscale PNG");
    } else {
        png_set_swap(png);
    }
    png_read_update_info(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    const std::size_t expect = want_depth == 8 ? static_cast<std::size_t>(w) * 3 : static_cast<std::size_t>(w) * 2;
    if (row_bytes != expect) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png", "unsupported pixel layout");
    }
    out.width = static_cast<int>(w);
    out.height = static_cast<int>(h);
    out.rows.resize(row_bytes * h);
    std::vector<png_bytep> ptrs(h);
    for (png_uint_32 y = 0; y < h; ++y) ptrs[y] = out.rows.data() + y * row_bytes;
    png_read_image(png, ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

}  // namespace

Rgb8 to_rgb8(const Image& image) {
    if (image.channels < 3) throw std::invalid_argument("PNG export needs at least 3 channels");
    Rgb8 out{image.width, image.height, std::vector<std::uint8_t>(image.plane_size() * 3)};
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(image.at(c, x, y), 0.0, 1.0);
                out.pixels[(static_cast<std::size_t>(y) * image.width + x) * 3 + c] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
    return out;
}

Image from_rgb8(const Rgb8& rgb) {
    Image img = Image::zeros(3, rgb.width, rgb.height);
    for (int y = 0; y < rgb.height; ++y)
        for (int x = 0; x < rgb.width; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, x, y) = rgb.pixels[(static_cast<std::size_t>(y) * rgb.width + x) * 3 + c] / 255.0;
    return img;
}

std::vector<std::uint8_t> encode_png(const Rgb8& rgb) {
    if (rgb.width < 1 || rgb.height < 1 || rgb.pixels.size() != static_cast<std::size_t>(rgb.width) * rgb.height * 3)
        throw std::invalid_argument("RGB buffer does not match its dimensions");
    return encode(rgb.width, rgb.height, PNG_COLOR_TYPE_RGB, 8, rgb.pixels.data(),
                  static_cast<std::size_t>(rgb.width) * 3);
}

Rgb8 decode_png(std::span<const std::uint8_t> bytes) {
    Decoded d = decode(bytes, PNG_COLOR_TYPE_RGB, 8);
    return {d.width, d.height, std::move(d.rows)};
}

void write_png(const std::filesystem::path& path, const Rgb8& rgb) { detail::write_file(path, encode_png(rgb)); }

Rgb8 read_png(const std::filesystem::path& path) { return decode_png(detail::read_file(path)); }

void write_png16(const std::filesystem::path& path, const Gray16& gray) {
    if (gray.width < 1 || gray.height < 1 || gray.pixels.size() != static_cast<std::size_t>(gray.width) * gray.height)
        throw std::invalid_argument("gray buffer does not match its dimensions");
    std::vector<std::uint8_t> rows(gray.pixels.size() * 2);
    for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
        rows[i * 2] = static_cast<std::uint8_t>(gray.pixels[i] & 0xff);
        rows[i * 2 + 1] = static_cast<std::uint8_t>(gray.pixels[i] >> 8);
    }
    detail::write_file(path, encode(gray.width, gray.height, PNG_COLOR_TYPE_GRAY, 16, rows.data(),
                                    static_cast<std::size_t>(gray.width) * 2));
}

Gray16 read_png16(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    Decoded d = decode(bytes, PNG_COLOR_TYPE_GRAY, 16);
    Gray16 out{d.width, d.height, std::vector<std::uint16_t>(static_cast<std::size_t>(d.width) * d.height)};
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = static_cast<std::uint16_t>(d.rows[i * 2] | (d.rows[i * 2 + 1] << 8));
    return out;
}

}  // namespace gaga
