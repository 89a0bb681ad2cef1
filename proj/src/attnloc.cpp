#include "a2r2/attnloc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "a2r2/config.hpp"
#include "a2r2/error.hpp"

namespace a2r2::attnloc {

AttentionStack::AttentionStack(int n_tokens, std::vector<int> layers, int n_heads, int grid_h, int grid_w,
                               std::vector<float> values)
    : n_tokens_(n_tokens),
      layers_(std::move(layers)),
      n_heads_(n_heads),
      grid_h_(grid_h),
      grid_w_(grid_w),
      values_(std::move(values)) {
    if (n_tokens_ < 0 || n_heads_ < 0 || grid_h_ < 1 || grid_w_ < 1) {
        throw std::invalid_argument("AttentionStack: invalid dimensions");
    }
    const auto expected = static_cast<std::size_t>(n_tokens_) * layers_.size() * n_heads_ * grid_h_ * grid_w_;
    if (values_.size() != expected) {
        throw std::invalid_argument("AttentionStack: value count does not match dimensions");
    }
    for (float v : values_) {
        if (!(v >= 0.0f) || !std::isfinite(v)) throw std::invalid_argument("AttentionStack: entries must be finite and >= 0");
    }
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{255}));
}

SaliencyMap reduce_attention(const AttentionStack& stack) {
    if (stack.n_tokens() < 1 || stack.n_layers() < 1 || stack.n_heads() < 1) {
        throw std::invalid_argument("reduce_attention: empty attention stack");
    }
    const int rows = stack.grid_h();
    const int cols = stack.grid_w();
    const std::size_t plane = static_cast<std::size_t>(rows) * cols;
    const std::size_t planes = stack.values().size() / plane;

    SaliencyMap out{rows, cols, std::vector<double>(plane, 0.0)};
    const float* data = stack.values().data();
    for (std::size_t p = 0; p < planes; ++p) {
        const float* src = data + p * plane;
        for (std::size_t i = 0; i < plane; ++i) out.values[i] += src[i];
    }
    const double n = static_cast<double>(planes);
    for (auto& v : out.values) v /= n;
    return out;
}

SaliencyMap normalize_u8(const SaliencyMap& a) {
    SaliencyMap out{a.rows, a.cols, std::vector<double>(a.values.size(), 0.0)};
    if (a.values.empty()) return out;
    const auto [lo, hi] = std::minmax_element(a.values.begin(), a.values.end());
    const double min = *lo;
    const double range = *hi - min;
    if (range <= 0.0) return out;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        out.values[i] = std::clamp(std::round(255.0 * (a.values[i] - min) / range), 0.0, 255.0);
    }
    return out;
}

double percentile_threshold(const SaliencyMap& a, double p) {
    if (!(p > 0.0 && p < 100.0)) throw std::invalid_argument("percentile must lie in (0, 100)");
    if (a.values.empty()) throw std::invalid_argument("percentile of an empty map");
    std::vector<double> sorted = a.values;
    std::sort(sorted.begin(), sorted.end());
    const double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BinaryMask threshold_percentile(const SaliencyMap& a, double p) {
    const double tau = percentile_threshold(a, p);
    BinaryMask out = BinaryMask::zeros(a.rows, a.cols);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (a.values[i] >= tau) out.values[i] = 255;
    }
    return out;
}

std::vector<Component> extract_components(const BinaryMask& mask) {
    std::vector<Component> out;
    std::vector<char> visited(mask.values.size(), 0);
    std::vector<Cell> stack;
    for (int r = 0; r < mask.rows; ++r) {
        for (int c = 0; c < mask.cols; ++c) {
            const auto idx = static_cast<std::size_t>(r) * mask.cols + c;
            if (!mask.white(r, c) || visited[idx]) continue;
            Component comp;
            visited[idx] = 1;
            stack.push_back({r, c});
            while (!stack.empty()) {
                const Cell cur = stack.back();
                stack.pop_back();
                comp.pixels.push_back(cur);
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int nr = cur.row + dr;
                        const int nc = cur.col + dc;
                        if (nr < 0 || nc < 0 || nr >= mask.rows || nc >= mask.cols) continue;
                        const auto nidx = static_cast<std::size_t>(nr) * mask.cols + nc;
                        if (visited[nidx] || !mask.white(nr, nc)) continue;
                        visited[nidx] = 1;
                        stack.push_back({nr, nc});
                    }
                }
            }
            std::sort(comp.pixels.begin(), comp.pixels.end());
            out.push_back(std::move(comp));
        }
    }
    return out;
}

const Component& largest_component(const std::vector<Component>& components) {
    if (components.empty()) throw NoSalientRegion("no white region in the thresholded attention map");
    const Component* best = &components.front();
    for (const auto& c : components) {
        if (c.area() > best->area() || (c.area() == best->area() && c.seed() < best->seed())) best = &c;
    }
    return *best;
}

BinaryMask dilate(const Component& component, int kernel, int rows, int cols) {
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("dilation kernel must be odd and >= 1");
    const int half = kernel / 2;
    BinaryMask out = BinaryMask::zeros(rows, cols);
    for (const auto& p : component.pixels) {
        for (int r = std::max(0, p.row - half); r <= std::min(rows - 1, p.row + half); ++r) {
            for (int c = std::max(0, p.col - half); c <= std::min(cols - 1, p.col + half); ++c) out.set(r, c);
        }
    }
    return out;
}

BoundingBox bounding_box(const BinaryMask& mask) {
    int top = mask.rows, bottom = -1, left = mask.cols, right = -1;
    for (int r = 0; r < mask.rows; ++r) {
        for (int c = 0; c < mask.cols; ++c) {
            if (!mask.white(r, c)) continue;
            top = std::min(top, r);
            bottom = std::max(bottom, r);
            left = std::min(left, c);
            right = std::max(right, c);
        }
    }
    if (bottom < 0) throw NoSalientRegion("bounding box of an empty mask");
    return {left, top, right - left + 1, bottom - top + 1};
}

PixelRect grid_to_pixels(const BoundingBox& box, int grid_h, int grid_w, int image_w, int image_h) {
    if (box.w < 1 || box.h < 1 || box.x < 0 || box.y < 0 || box.x + box.w > grid_w || box.y + box.h > grid_h) {
        throw std::invalid_argument("grid_to_pixels: box outside the grid");
    }
    // Exact integer arithmetic: floor(a*s) and ceil(a*s) with s = image/grid.
    auto floor_scale = [](long long a, long long image, long long grid) { return a * image / grid; };
    auto ceil_scale = [](long long a, long long image, long long grid) { return (a * image + grid - 1) / grid; };
    const long long left = std::clamp<long long>(floor_scale(box.x, image_w, grid_w), 0, image_w);
    const long long top = std::clamp<long long>(floor_scale(box.y, image_h, grid_h), 0, image_h);
    const long long right = std::clamp<long long>(ceil_scale(box.x + box.w, image_w, grid_w), 0, image_w);
    const long long bottom = std::clamp<long long>(ceil_scale(box.y + box.h, image_h, grid_h), 0, image_h);
    if (right <= left || bottom <= top) throw NoSalientRegion("localized region is empty after clamping");
    return {static_cast<int>(left), static_cast<int>(top), static_cast<int>(right - left),
            static_cast<int>(bottom - top)};
}

Regions crop_regions(const RasterImage& input, const RasterImage& rendered, const BoundingBox& box, int grid_h,
                     int grid_w) {
    const auto ra = grid_to_pixels(box, grid_h, grid_w, input.width(), input.height());
    const auto rb = grid_to_pixels(box, grid_h, grid_w, rendered.width(), rendered.height());
    return {input.crop(ra.x, ra.y, ra.w, ra.h), rendered.crop(rb.x, rb.y, rb.w, rb.h), ra, rb};
}

Localization localize(const RasterImage& input, const RasterImage& rendered, const AttentionStack& stack,
                      double percentile, int dilation_kernel) {
    const auto saliency = normalize_u8(reduce_attention(stack));
    auto mask = threshold_percentile(saliency, percentile);
    const auto components = extract_components(mask);
    const auto& best = largest_component(components);
    const auto dilated = dilate(best, dilation_kernel, mask.rows, mask.cols);
    const auto box = bounding_box(dilated);
    return {crop_regions(input, rendered, box, stack.grid_h(), stack.grid_w()), box, std::move(mask)};
}

Localization localize(const RasterImage& input, const RasterImage& rendered, const AttentionStack& stack,
                      const RunConfig& config) {
    return localize(input, rendered, stack, config.percentile, config.dilation_kernel);
}

std::vector<std::uint8_t> overlay_rgb(const RasterImage& image, const BinaryMask& mask, const PixelRect& rect) {
    const int w = image.width();
    const int h = image.height();
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
    for (int r = 0; r < h; ++r) {
        const int mr = mask.rows > 0 ? std::min(mask.rows - 1, r * mask.rows / h) : 0;
        for (int c = 0; c < w; ++c) {
            const int mc = mask.cols > 0 ? std::min(mask.cols - 1, c * mask.cols / w) : 0;
            const std::uint8_t g = image.at(r, c);
            auto* px = &rgb[(static_cast<std::size_t>(r) * w + c) * 3];
            px[0] = px[1] = px[2] = g;
            if (!mask.values.empty() && mask.white(mr, mc)) {
                px[0] = static_cast<std::uint8_t>(std::min(255, g / 2 + 128));
                px[1] = static_cast<std::uint8_t>(g / 2);
                px[2] = static_cast<std::uint8_t>(g / 2);
            }
            const bool on_edge = (r == rect.y || r == rect.y + rect.h - 1) && c >= rect.x && c < rect.x + rect.w;
            const bool on_side = (c == rect.x || c == rect.x + rect.w - 1) && r >= rect.y && r < rect.y + rect.h;
            if (on_edge || on_side) {
                px[0] = 0;
                px[1] = 160;
                px[2] = 255;
            }
        }
    }
    return rgb;
}

}  // namespace a2r2::attnloc
