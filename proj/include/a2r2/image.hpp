#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace a2r2 {

/// Row-major 8-bit grayscale raster. Immutable after construction.
class RasterImage {
public:
    RasterImage(int width, int height, std::vector<std::uint8_t> pixels,
                std::optional<int> dpi = std::nullopt);

    static RasterImage filled(int width, int height, std::uint8_t value,
                              std::optional<int> dpi = std::nullopt);

    int width() const { return width_; }
    int height() const { return height_; }
    std::optional<int> dpi() const { return dpi_; }
    std::span<const std::uint8_t> pixels() const { return pixels_; }
    std::uint8_t at(int row, int col) const {
        return pixels_[static_cast<std::size_t>(row) * width_ + col];
    }

    // Copy of the rectangle [left, left+w) x [top, top+h); must lie inside the image.
    RasterImage crop(int left, int top, int w, int h) const;

    // Same content, placed top-left on a white canvas of at least (w, h).
    RasterImage padded_to(int w, int h, std::uint8_t fill = 255) const;

    friend bool operator==(const RasterImage& a, const RasterImage& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.pixels_ == b.pixels_;
    }

private:
    int width_;
    int height_;
    std::vector<std::uint8_t> pixels_;
    std::optional<int> dpi_;
};

// PNG codec. Color and alpha inputs are flattened onto white and converted to luma.
RasterImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RasterImage& image);
RasterImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RasterImage& image);
// Interleaved 8-bit RGB, used for debug overlays.
void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   std::span<const std::uint8_t> rgb);

}  // namespace a2r2
