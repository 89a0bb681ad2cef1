#pragma once

#include <compare>
#include <cstdint>
#include <utility>
#include <vector>

#include "a2r2/image.hpp"

namespace a2r2 {
struct RunConfig;
}

namespace a2r2::attnloc {

/// Spatial attention maps indexed by (token, layer, head), each grid_h x grid_w.
/// Storage is token-major: [token][layer][head][row][col].
class AttentionStack {
public:
    AttentionStack(int n_tokens, std::vector<int> layers, int n_heads, int grid_h, int grid_w,
                   std::vector<float> values);

    int n_tokens() const { return n_tokens_; }
    const std::vector<int>& layers() const { return layers_; }
    int n_layers() const { return static_cast<int>(layers_.size()); }
    int n_heads() const { return n_heads_; }
    int grid_h() const { return grid_h_; }
    int grid_w() const { return grid_w_; }
    const std::vector<float>& values() const { return values_; }

    // `layer` is a position in layers(), not the absolute layer index.
    float at(int token, int layer, int head, int row, int col) const {
        const auto plane = (static_cast<std::size_t>(token) * layers_.size() + layer) * n_heads_ + head;
        return values_[(plane * grid_h_ + row) * grid_w_ + col];
    }

private:
    int n_tokens_;
    std::vector<int> layers_;
    int n_heads_;
    int grid_h_;
    int grid_w_;
    std::vector<float> values_;
};

struct SaliencyMap {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;  // row-major

    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

struct BinaryMask {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> values;  // 0 or 255, row-major

    static BinaryMask zeros(int rows, int cols) {
        return {rows, cols, std::vector<std::uint8_t>(static_cast<std::size_t>(rows) * cols, 0)};
    }
    bool white(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c] == 255; }
    void set(int r, int c) { values[static_cast<std::size_t>(r) * cols + c] = 255; }
    std::size_t count() const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

struct Cell {
    int row;
    int col;
    friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// 8-connected set of white cells; pixels are kept sorted, so the seed is pixels.front().
struct Component {
    std::vector<Cell> pixels;

    std::size_t area() const { return pixels.size(); }
    Cell seed() const { return pixels.front(); }
};

struct BoundingBox {
    int x = 0;  // left column
    int y = 0;  // top row
    int w = 0;
    int h = 0;
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Pixel rectangle inside an image (left, top, width, height).
using PixelRect = BoundingBox;

// Mean over every (token, layer, head) map. Throws std::invalid_argument on an empty stack.
SaliencyMap reduce_attention(const AttentionStack& stack);

// round(255 * (A - min) / (max - min)), half away from zero; all zero when max == min.
SaliencyMap normalize_u8(const SaliencyMap& a);

// Linear-interpolation percentile at rank p/100 * (N - 1); white where value >= threshold.
double percentile_threshold(const SaliencyMap& a, double p);
BinaryMask threshold_percentile(const SaliencyMap& a, double p);

// Maximal 8-connected components, ordered by seed.
std::vector<Component> extract_components(const BinaryMask& mask);

// Largest by area, ties to the smallest seed. Throws NoSalientRegion on an empty list.
const Component& largest_component(const std::vector<Component>& components);

// Union of the k x k neighbourhoods of the component's cells, clipped to rows x cols.
BinaryMask dilate(const Component& component, int kernel, int rows, int cols);

// Minimal box around the white cells. Throws NoSalientRegion on an empty mask.
BoundingBox bounding_box(const BinaryMask& mask);

// Grid box -> pixel rectangle: floor on the leading edges, ceil on the trailing ones,
// clamped to the image. Throws NoSalientRegion when the clamped rectangle is empty.
PixelRect grid_to_pixels(const BoundingBox& box, int grid_h, int grid_w, int image_w, int image_h);

struct Regions {
    RasterImage input;     // R, cropped from I
    RasterImage rendered;  // R', cropped from I'
    PixelRect input_rect;
    PixelRect rendered_rect;
};

Regions crop_regions(const RasterImage& input, const RasterImage& rendered, const BoundingBox& box,
                     int grid_h, int grid_w);

struct Localization {
    Regions regions;
    BoundingBox box;  // grid units
    BinaryMask mask;  // thresholded attention, for overlays
};

// reduce -> normalize -> threshold -> components -> largest -> dilate -> bounding box -> crop.
Localization localize(const RasterImage& input, const RasterImage& rendered, const AttentionStack& stack,
                      double percentile, int dilation_kernel);
Localization localize(const RasterImage& input, const RasterImage& rendered, const AttentionStack& stack,
                      const RunConfig& config);

// RGB overlay of the mask (tinted) and box (outlined) over an image, for debugging.
std::vector<std::uint8_t> overlay_rgb(const RasterImage& image, const BinaryMask& mask, const PixelRect& rect);

}  // namespace a2r2::attnloc
