#include "a2r2/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

#include "a2r2/error.hpp"

namespace a2r2 {

RasterImage::RasterImage(int width, int height, std::vector<std::uint8_t> pixels,
                         std::optional<int> dpi)
    : width_(width), height_(height), pixels_(std::move(pixels)), dpi_(dpi) {
    if (width < 1 || height < 1) {
        throw std::invalid_argument("RasterImage: dimensions must be positive");
    }
    if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw std::invalid_argument("RasterImage: pixel count does not match width x height");
    }
}

RasterImage RasterImage::filled(int width, int height, std::uint8_t value, std::optional<int> dpi) {
    if (width < 1 || height < 1) {
        throw std::invalid_argument("RasterImage: dimensions must be positive");
    }
    return RasterImage(width, height,
                       std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, value),
                       dpi);
}

RasterImage RasterImage::crop(int left, int top, int w, int h) const {
    if (left < 0 || top < 0 || w < 1 || h < 1 || left + w > width_ || top + h > height_) {
        throw std::out_of_range("RasterImage::crop: rectangle outside image");
    }
    std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h);
    for (int r = 0; r < h; ++r) {
        const auto* src = pixels_.data() + static_cast<std::size_t>(top + r) * width_ + left;
        std::copy(src, src + w, out.begin() + static_cast<std::ptrdiff_t>(r) * w);
    }
    return RasterImage(w, h, std::move(out), dpi_);
}

RasterImage RasterImage::padded_to(int w, int h, std::uint8_t fill) const {
    w = std::max(w, width_);
    h = std::max(h, height_);
    if (w == width_ && h == height_) {
        return *this;
    }
    std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h, fill);
    for (int r = 0; r < height_; ++r) {
        const auto* src = pixels_.data() + static_cast<std::size_t>(r) * width_;
        std::copy(src, src + width_, out.begin() + static_cast<std::ptrdiff_t>(r) * w);
    }
    return RasterImage(w, h, std::move(out), dpi_);
}

namespace {

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t length) {
    auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cursor->offset + length > cursor->bytes.size()) {
        png_error(png, "truncated PNG data");
    }
    std::memcpy(out, cursor->bytes.data() + cursor->offset, length);
    cursor->offset += length;
}

void write_to_vector(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void flush_noop(png_structp) {}

std::uint8_t luma(double r, double g, double b) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(0.299 * r + 0.587 * g + 0.114 * b), 0L, 255L));
}

std::vector<std::uint8_t> encode(int width, int height, int color_type,
                                 std::span<const std::uint8_t> data) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw Error("png: cannot create write struct");
    }
    png_infop info = png_create_info_struct(png);
    std::vector<std::uint8_t> out;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("png: encoding failed");
    }
    const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
    png_set_write_fn(png, &out, write_to_vector, flush_noop);
    png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < height; ++r) {
        auto* row = const_cast<png_bytep>(data.data() + static_cast<std::size_t>(r) * width * channels);
        png_write_row(png, row);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

RasterImage decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw Error("png: not a PNG stream");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw Error("png: cannot create read struct");
    }
    png_infop info = png_create_info_struct(png);
    ReadCursor cursor{bytes};
    std::vector<std::uint8_t> rgba;
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("png: decoding failed");
    }
    png_set_read_fn(png, &cursor, read_from_memory);
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    // Expand everything to 8-bit RGBA.
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (!(color_type & PNG_COLOR_MASK_ALPHA) && !png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_filler(png, 0xFF, PNG_FILLER_AFTER);
    }
    png_read_update_info(png, info);

    rgba.resize(static_cast<std::size_t>(width) * height * 4);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 r = 0; r < height; ++r) {
        rows[r] = rgba.data() + static_cast<std::size_t>(r) * width * 4;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    std::vector<std::uint8_t> gray(static_cast<std::size_t>(width) * height);
    for (std::size_t i = 0; i < gray.size(); ++i) {
        const double a = rgba[4 * i + 3] / 255.0;
        // Composite over white.
        const double r = rgba[4 * i] * a + 255.0 * (1.0 - a);
        const double g = rgba[4 * i + 1] * a + 255.0 * (1.0 - a);
        const double b = rgba[4 * i + 2] * a + 255.0 * (1.0 - a);
        gray[i] = luma(r, g, b);
    }
    return RasterImage(static_cast<int>(width), static_cast<int>(height), std::move(gray));
}

std::vector<std::uint8_t> encode_png(const RasterImage& image) {
    return encode(image.width(), image.height(), PNG_COLOR_TYPE_GRAY, image.pixels());
}

RasterImage read_png(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw Error("cannot open image " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return decode_png(bytes);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

void write_png(const std::filesystem::path& path, const RasterImage& image) {
    write_file(path, encode_png(image));
}

void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   std::span<const std::uint8_t> rgb) {
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
        throw std::invalid_argument("write_png_rgb: buffer size mismatch");
    }
    write_file(path, encode(width, height, PNG_COLOR_TYPE_RGB, rgb));
}

}  // namespace a2r2
