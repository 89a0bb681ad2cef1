#include <gtest/gtest.h>

#include <random>

#include "a2r2/attnloc.hpp"
#include "a2r2/error.hpp"
#include "oracles.hpp"

using namespace a2r2;
using namespace a2r2::attnloc;

namespace {

SaliencyMap map_of(int rows, int cols, std::vector<double> v) { return {rows, cols, std::move(v)}; }

BinaryMask mask_of(int rows, int cols, const std::vector<Cell>& white) {
    auto m = BinaryMask::zeros(rows, cols);
    for (auto c : white) m.set(c.row, c.col);
    return m;
}

BinaryMask random_mask(std::mt19937_64& rng, int rows, int cols, double density) {
    std::uniform_real_distribution<double> u(0, 1);
    auto m = BinaryMask::zeros(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (u(rng) < density) m.set(r, c);
        }
    }
    return m;
}

std::vector<std::vector<bool>> as_grid(const BinaryMask& m) {
    std::vector<std::vector<bool>> g(m.rows, std::vector<bool>(m.cols));
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) g[r][c] = m.white(r, c);
    }
    return g;
}

AttentionStack single(int rows, int cols, std::vector<float> v) {
    return AttentionStack(1, {0}, 1, rows, cols, std::move(v));
}

}  // namespace

TEST(Reduce, IdentityAndAverage) {
    const auto a = reduce_attention(single(1, 3, {0.5f, 1.0f, 2.0f}));
    EXPECT_EQ(a.values, (std::vector<double>{0.5, 1.0, 2.0}));
    const auto b = reduce_attention(AttentionStack(1, {0}, 2, 1, 2, {0, 0, 2, 2}));
    EXPECT_EQ(b.values, (std::vector<double>{1.0, 1.0}));
}

TEST(Reduce, MatchesNestedLoopMean) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> u(0, 1);
    std::vector<float> v(5 * 3 * 4 * 8 * 8);
    for (auto& x : v) x = u(rng);
    const AttentionStack s(5, {1, 2, 3}, 4, 8, 8, v);
    const auto got = reduce_attention(s);
    const auto want = oracle::mean_map(s);
    for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) EXPECT_NEAR(got.at(r, c), want[r][c], 1e-12);
    }
}

TEST(Reduce, RejectsInvalidStacks) {
    EXPECT_THROW(AttentionStack(1, {0}, 1, 2, 2, {1, 2, 3}), std::invalid_argument);
    EXPECT_THROW(AttentionStack(1, {0}, 1, 1, 1, {-1.0f}), std::invalid_argument);
}

TEST(Normalize, WorkedExamples) {
    EXPECT_EQ(normalize_u8(map_of(2, 2, {0, 2, 1, 2})).values, (std::vector<double>{0, 255, 128, 255}));
    EXPECT_EQ(normalize_u8(map_of(2, 2, {3, 3, 3, 3})).values, (std::vector<double>{0, 0, 0, 0}));
}

TEST(Normalize, MatchesFormula) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 7);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> v(30);
        for (auto& x : v) x = u(rng);
        const auto got = normalize_u8(map_of(5, 6, v));
        oracle::Grid g(5, std::vector<double>(6));
        for (int i = 0; i < 30; ++i) g[i / 6][i % 6] = v[i];
        const auto want = oracle::normalized(g);
        for (int i = 0; i < 30; ++i) EXPECT_EQ(got.values[i], want[i / 6][i % 6]);
    }
}

TEST(Threshold, WorkedExamples) {
    std::vector<double> ramp(16);
    for (int i = 0; i < 16; ++i) ramp[i] = i;
    EXPECT_DOUBLE_EQ(percentile_threshold(map_of(4, 4, ramp), 75), 11.25);
    const auto m = threshold_percentile(map_of(4, 4, ramp), 75);
    EXPECT_EQ(m.count(), 4u);
    for (int i = 12; i < 16; ++i) EXPECT_TRUE(m.white(i / 4, i % 4));

    EXPECT_EQ(threshold_percentile(map_of(3, 3, std::vector<double>(9, 4.0)), 75).count(), 9u);

    std::vector<double> four(16, 0.0);
    for (int i : {1, 6, 11, 12}) four[i] = 255;
    EXPECT_DOUBLE_EQ(percentile_threshold(map_of(4, 4, four), 75), 63.75);
    const auto m2 = threshold_percentile(map_of(4, 4, four), 75);
    EXPECT_EQ(m2.count(), 4u);
    for (int i : {1, 6, 11, 12}) EXPECT_TRUE(m2.white(i / 4, i % 4));
}

TEST(Threshold, MatchesSortOracle) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const int rows = 1 + rng() % 12, cols = 1 + rng() % 12;
        std::vector<double> v(rows * cols);
        for (auto& x : v) x = static_cast<double>(rng() % 256);
        oracle::Grid g(rows, std::vector<double>(cols));
        for (int i = 0; i < rows * cols; ++i) g[i / cols][i % cols] = v[i];
        const double p = 1 + static_cast<double>(rng() % 98);
        EXPECT_DOUBLE_EQ(percentile_threshold(map_of(rows, cols, v), p), oracle::sorted_percentile(g, p));
    }
    EXPECT_THROW(percentile_threshold(map_of(1, 1, {1}), 100), std::invalid_argument);
}

TEST(Components, WorkedExamples) {
    const auto one = extract_components(mask_of(3, 3, {{1, 1}}));
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].area(), 1u);
    EXPECT_EQ(extract_components(mask_of(3, 3, {{0, 0}, {1, 1}})).size(), 1u);
    EXPECT_TRUE(extract_components(BinaryMask::zeros(4, 4)).empty());
}

// Property: the components partition the white cells exactly as a flood fill does.
TEST(Components, PartitionMatchesFloodFill) {
    std::mt19937_64 rng(1234);
    for (int seed = 0; seed < 1000; ++seed) {
        const auto mask = random_mask(rng, 16, 16, 0.1 + 0.5 * (seed % 7) / 7.0);
        const auto comps = extract_components(mask);
        int count = 0;
        const auto lab = oracle::flood_fill(as_grid(mask), &count);
        ASSERT_EQ(static_cast<int>(comps.size()), count);
        std::size_t covered = 0;
        for (const auto& comp : comps) {
            const int label = lab[comp.seed().row][comp.seed().col];
            for (const auto& cell : comp.pixels) ASSERT_EQ(lab[cell.row][cell.col], label);
            covered += comp.area();
        }
        ASSERT_EQ(covered, mask.count());
    }
}

TEST(Largest, WorkedExamples) {
    const auto comps = extract_components(mask_of(6, 6, {{0, 0}, {0, 1}, {1, 0}, {1, 1},
                                                         {3, 3}, {3, 4}, {3, 5}, {4, 3}, {4, 4}, {4, 5},
                                                         {5, 3}, {5, 4}, {5, 5}}));
    EXPECT_EQ(largest_component(comps).area(), 9u);

    const auto tie = extract_components(mask_of(2, 7, {{0, 0}, {1, 0}, {0, 5}, {1, 5}}));
    EXPECT_EQ(largest_component(tie).seed(), (Cell{0, 0}));
    EXPECT_THROW(largest_component({}), NoSalientRegion);
}

TEST(Largest, MatchesMaxScan) {
    std::mt19937_64 rng(77);
    for (int seed = 0; seed < 500; ++seed) {
        const auto mask = random_mask(rng, 12, 12, 0.3);
        const auto comps = extract_components(mask);
        if (comps.empty()) continue;
        int count = 0;
        const auto lab = oracle::flood_fill(as_grid(mask), &count);
        const int want = oracle::max_area_label(lab, count);
        const auto& got = largest_component(comps);
        EXPECT_EQ(lab[got.seed().row][got.seed().col], want);
    }
}

TEST(Dilate, WorkedExamples) {
    const auto m = dilate(Component{{{5, 5}}}, 3, 16, 16);
    EXPECT_EQ(m.count(), 9u);
    for (int r = 4; r <= 6; ++r) {
        for (int c = 4; c <= 6; ++c) EXPECT_TRUE(m.white(r, c));
    }
    const auto corner = dilate(Component{{{0, 0}}}, 3, 16, 16);
    EXPECT_EQ(corner, mask_of(16, 16, {{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
    EXPECT_EQ(dilate(Component{{{2, 2}}}, 1, 4, 4).count(), 1u);
    EXPECT_THROW(dilate(Component{{{0, 0}}}, 2, 4, 4), std::invalid_argument);
}

TEST(Dilate, MatchesNeighbourhoodUnion) {
    std::mt19937_64 rng(3);
    for (int seed = 0; seed < 300; ++seed) {
        const auto mask = random_mask(rng, 14, 10, 0.35);
        const auto comps = extract_components(mask);
        if (comps.empty()) continue;
        const auto& comp = comps[rng() % comps.size()];
        const int k = 1 + 2 * static_cast<int>(rng() % 3);
        const auto got = dilate(comp, k, 14, 10);
        const auto lab = oracle::flood_fill(as_grid(mask));
        const auto want = oracle::neighbourhood_union(lab, lab[comp.seed().row][comp.seed().col], k);
        EXPECT_EQ(as_grid(got), want);
    }
}

TEST(Box, WorkedExamples) {
    EXPECT_EQ(bounding_box(mask_of(8, 8, {{2, 3}, {4, 7}})), (BoundingBox{3, 2, 5, 3}));
    EXPECT_EQ(bounding_box(mask_of(8, 8, {{6, 1}})), (BoundingBox{1, 6, 1, 1}));
    EXPECT_THROW(bounding_box(BinaryMask::zeros(3, 3)), NoSalientRegion);
}

// Property: the box holds every white cell and each edge touches one.
TEST(Box, TightContainment) {
    std::mt19937_64 rng(21);
    for (int seed = 0; seed < 500; ++seed) {
        const auto m = random_mask(rng, 10, 13, 0.05);
        if (m.count() == 0) continue;
        const auto b = bounding_box(m);
        bool top = false, bottom = false, left = false, right = false;
        for (int r = 0; r < m.rows; ++r) {
            for (int c = 0; c < m.cols; ++c) {
                if (!m.white(r, c)) continue;
                ASSERT_TRUE(r >= b.y && r < b.y + b.h && c >= b.x && c < b.x + b.w);
                top |= r == b.y;
                bottom |= r == b.y + b.h - 1;
                left |= c == b.x;
                right |= c == b.x + b.w - 1;
            }
        }
        EXPECT_TRUE(top && bottom && left && right);
    }
}

TEST(Crop, ScalingRule) {
    EXPECT_EQ(grid_to_pixels({2, 1, 2, 1}, 8, 8, 256, 256), (PixelRect{64, 32, 64, 32}));
    // left = floor(2 * 31.25) = 62, right = ceil(4 * 31.25) = 125, top = 12, bottom = ceil(2 * 12.5) = 25.
    EXPECT_EQ(grid_to_pixels({2, 1, 2, 1}, 8, 8, 250, 100), (PixelRect{62, 12, 63, 13}));

    const auto a = RasterImage::filled(40, 30, 10);
    const auto b = RasterImage::filled(50, 20, 20);
    const auto full = crop_regions(a, b, {0, 0, 4, 4}, 4, 4);
    EXPECT_EQ(full.input, a);
    EXPECT_EQ(full.rendered, b);
    EXPECT_THROW(grid_to_pixels({3, 0, 2, 1}, 4, 4, 40, 40), std::invalid_argument);
}

TEST(Crop, MatchesOutwardRoundingOracle) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 1000; ++trial) {
        const int gh = 1 + rng() % 32, gw = 1 + rng() % 32;
        const int iw = 1 + rng() % 400, ih = 1 + rng() % 400;
        const int x = rng() % gw, y = rng() % gh;
        const int w = 1 + rng() % (gw - x), h = 1 + rng() % (gh - y);
        const auto want = oracle::to_pixels({x, y, w, h}, gh, gw, iw, ih);
        if (want.w <= 0 || want.h <= 0) {
            EXPECT_THROW(grid_to_pixels({x, y, w, h}, gh, gw, iw, ih), NoSalientRegion);
            continue;
        }
        EXPECT_EQ(grid_to_pixels({x, y, w, h}, gh, gw, iw, ih), (PixelRect{want.x, want.y, want.w, want.h}));
    }
}

TEST(Localize, SharpPeakGivesDilatedBlock) {
    // The hot block is a quarter of the grid, so the threshold lands between
    // background and peak and only the block survives.
    std::vector<float> v(64, 0.0f);
    for (int r = 2; r <= 5; ++r) {
        for (int c = 3; c <= 6; ++c) v[r * 8 + c] = 1.0f;
    }
    const auto img = RasterImage::filled(64, 64, 255);
    const auto loc = localize(img, img, single(8, 8, v), 75.0, 3);
    EXPECT_EQ(loc.mask.count(), 16u);
    EXPECT_EQ(loc.box, (BoundingBox{2, 1, 6, 6}));
    EXPECT_EQ(loc.regions.input_rect, (PixelRect{16, 8, 48, 48}));
    EXPECT_EQ(loc.regions.input.width(), 48);
}

TEST(Localize, ConstantStackGivesWholeImage) {
    const auto a = RasterImage::filled(30, 20, 0);
    const auto b = RasterImage::filled(35, 25, 255);
    const auto loc = localize(a, b, single(4, 4, std::vector<float>(16, 0.3f)), 75.0, 3);
    EXPECT_EQ(loc.box, (BoundingBox{0, 0, 4, 4}));
    EXPECT_EQ(loc.regions.input, a);
    EXPECT_EQ(loc.regions.rendered, b);
}

TEST(Localize, MatchesComposedOracle) {
    std::mt19937_64 rng(2024);
    for (int seed = 0; seed < 300; ++seed) {
        const auto s = oracle::random_stack(rng);
        const int iw = 16 + rng() % 300, ih = 16 + rng() % 200;
        const auto img = RasterImage::filled(iw, ih, 255);
        const auto got = localize(img, img, s, 75.0, 3);
        const auto want = oracle::localize(s, iw, ih, iw, ih, 75.0, 3);
        ASSERT_EQ(got.box, (BoundingBox{want.box.x, want.box.y, want.box.w, want.box.h})) << seed;
        ASSERT_EQ(got.regions.input_rect,
                  (PixelRect{want.input_rect.x, want.input_rect.y, want.input_rect.w, want.input_rect.h}));
    }
}
