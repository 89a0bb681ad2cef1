#pragma once

// Brute-force reference implementations, written independently of the library
// code they check. They favour obviousness over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "a2r2/attnloc.hpp"
#include "a2r2/latex.hpp"

namespace a2r2::oracle {

using Grid = std::vector<std::vector<double>>;
using Labels = std::vector<std::vector<int>>;  // 0 = background, 1.. = component

struct Box {
    int x, y, w, h;
};

inline Grid mean_map(const attnloc::AttentionStack& s) {
    Grid g(s.grid_h(), std::vector<double>(s.grid_w(), 0.0));
    for (int r = 0; r < s.grid_h(); ++r) {
        for (int c = 0; c < s.grid_w(); ++c) {
            double sum = 0.0;
            for (int t = 0; t < s.n_tokens(); ++t) {
                for (int l = 0; l < s.n_layers(); ++l) {
                    for (int h = 0; h < s.n_heads(); ++h) sum += s.at(t, l, h, r, c);
                }
            }
            g[r][c] = sum / static_cast<double>(s.n_tokens() * s.n_layers() * s.n_heads());
        }
    }
    return g;
}

inline Grid normalized(const Grid& g) {
    double lo = g[0][0], hi = g[0][0];
    for (const auto& row : g) {
        for (double v : row) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    Grid out = g;
    for (auto& row : out) {
        for (double& v : row) v = hi == lo ? 0.0 : std::round(255.0 * (v - lo) / (hi - lo));
    }
    return out;
}

inline double sorted_percentile(const Grid& g, double p) {
    std::vector<double> all;
    for (const auto& row : g) all.insert(all.end(), row.begin(), row.end());
    std::sort(all.begin(), all.end());
    const double rank = p / 100.0 * static_cast<double>(all.size() - 1);
    const auto below = static_cast<std::size_t>(rank);
    if (below + 1 >= all.size()) return all.back();
    return all[below] + (rank - static_cast<double>(below)) * (all[below + 1] - all[below]);
}

inline std::vector<std::vector<bool>> threshold(const Grid& g, double tau) {
    std::vector<std::vector<bool>> m(g.size(), std::vector<bool>(g[0].size()));
    for (std::size_t r = 0; r < g.size(); ++r) {
        for (std::size_t c = 0; c < g[r].size(); ++c) m[r][c] = g[r][c] >= tau;
    }
    return m;
}

// Breadth-first 8-connected labelling; labels are assigned in raster order of
// each component's first cell.
inline Labels flood_fill(const std::vector<std::vector<bool>>& m, int* count = nullptr) {
    const int rows = static_cast<int>(m.size());
    const int cols = static_cast<int>(m[0].size());
    Labels lab(rows, std::vector<int>(cols, 0));
    int next = 0;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (!m[r][c] || lab[r][c]) continue;
            ++next;
            std::deque<std::pair<int, int>> q{{r, c}};
            lab[r][c] = next;
            while (!q.empty()) {
                auto [cr, cc] = q.front();
                q.pop_front();
                for (int nr = cr - 1; nr <= cr + 1; ++nr) {
                    for (int nc = cc - 1; nc <= cc + 1; ++nc) {
                        if (nr < 0 || nc < 0 || nr >= rows || nc >= cols) continue;
                        if (!m[nr][nc] || lab[nr][nc]) continue;
                        lab[nr][nc] = next;
                        q.emplace_back(nr, nc);
                    }
                }
            }
        }
    }
    if (count) *count = next;
    return lab;
}

// Label with the largest area; the first label wins ties, which is the one whose
// first cell comes earliest in raster order.
inline int max_area_label(const Labels& lab, int count) {
    std::vector<int> area(count + 1, 0);
    for (const auto& row : lab) {
        for (int v : row) ++area[v];
    }
    int best = 0;
    for (int k = 1; k <= count; ++k) {
        if (best == 0 || area[k] > area[best]) best = k;
    }
    return best;
}

// Cell is set when any labelled cell lies within the k x k neighbourhood.
inline std::vector<std::vector<bool>> neighbourhood_union(const Labels& lab, int label, int k) {
    const int rows = static_cast<int>(lab.size());
    const int cols = static_cast<int>(lab[0].size());
    const int half = k / 2;
    std::vector<std::vector<bool>> out(rows, std::vector<bool>(cols, false));
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            for (int dr = -half; dr <= half && !out[r][c]; ++dr) {
                for (int dc = -half; dc <= half; ++dc) {
                    const int sr = r + dr, sc = c + dc;
                    if (sr >= 0 && sc >= 0 && sr < rows && sc < cols && lab[sr][sc] == label) {
                        out[r][c] = true;
                        break;
                    }
                }
            }
        }
    }
    return out;
}

inline Box min_max_box(const std::vector<std::vector<bool>>& m) {
    int x0 = 1 << 30, y0 = 1 << 30, x1 = -1, y1 = -1;
    for (int r = 0; r < static_cast<int>(m.size()); ++r) {
        for (int c = 0; c < static_cast<int>(m[r].size()); ++c) {
            if (!m[r][c]) continue;
            x0 = std::min(x0, c);
            x1 = std::max(x1, c);
            y0 = std::min(y0, r);
            y1 = std::max(y1, r);
        }
    }
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

// Outward rounding of a grid box onto an image, by scanning pixel edges:
// left is the last edge at or before the box start, right the first at or after its end.
inline Box to_pixels(const Box& b, int grid_h, int grid_w, int image_w, int image_h) {
    const auto last_at_or_before = [](long long cell, long long size, long long grid) {
        long long px = 0;
        while ((px + 1) * grid <= cell * size) ++px;
        return static_cast<int>(px);
    };
    const auto first_at_or_after = [](long long cell, long long size, long long grid) {
        long long px = 0;
        while (px * grid < cell * size) ++px;
        return static_cast<int>(px);
    };
    const int left = last_at_or_before(b.x, image_w, grid_w);
    const int top = last_at_or_before(b.y, image_h, grid_h);
    const int right = std::min(image_w, first_at_or_after(b.x + b.w, image_w, grid_w));
    const int bottom = std::min(image_h, first_at_or_after(b.y + b.h, image_h, grid_h));
    return {left, top, right - left, bottom - top};
}

struct Localized {
    Box box;
    Box input_rect;
    Box rendered_rect;
};

inline Localized localize(const attnloc::AttentionStack& s, int input_w, int input_h, int rendered_w,
                          int rendered_h, double p, int k) {
    const auto g = normalized(mean_map(s));
    int count = 0;
    const auto lab = flood_fill(threshold(g, sorted_percentile(g, p)), &count);
    const auto box = min_max_box(neighbourhood_union(lab, max_area_label(lab, count), k));
    return {box, to_pixels(box, s.grid_h(), s.grid_w(), input_w, input_h),
            to_pixels(box, s.grid_h(), s.grid_w(), rendered_w, rendered_h)};
}

// Random stack with up to 4 tokens, layers and heads on a grid up to 32 x 32.
// Value styles vary: smooth noise, a few quantized levels (ties), sparse peaks.
inline attnloc::AttentionStack random_stack(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> small(1, 4), side(1, 32), style(0, 2);
    const int n_tokens = small(rng), n_layers = small(rng), n_heads = small(rng);
    const int gh = side(rng), gw = side(rng);
    const int kind = style(rng);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> values(static_cast<std::size_t>(n_tokens) * n_layers * n_heads * gh * gw);
    for (auto& v : values) {
        switch (kind) {
            case 0: v = u(rng); break;
            case 1: v = static_cast<float>(rng() % 4); break;
            default: v = u(rng) < 0.1f ? 1.0f + u(rng) : 0.0f; break;
        }
    }
    std::vector<int> layers(n_layers);
    for (int l = 0; l < n_layers; ++l) layers[l] = 10 + l;
    return attnloc::AttentionStack(n_tokens, layers, n_heads, gh, gw, std::move(values));
}

// Full-table Levenshtein over any sequence type.
template <typename Seq>
std::size_t levenshtein_table(const Seq& a, const Seq& b) {
    std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        }
    }
    return d[a.size()][b.size()];
}

// LCS by the textbook table, then ROUGE-L F1 x 100.
inline double rouge_l_table(const Tokens& cand, const Tokens& ref) {
    if (cand.empty() || ref.empty()) return 0.0;
    std::vector<std::vector<std::size_t>> t(cand.size() + 1, std::vector<std::size_t>(ref.size() + 1, 0));
    for (std::size_t i = 1; i <= cand.size(); ++i) {
        for (std::size_t j = 1; j <= ref.size(); ++j) {
            t[i][j] = cand[i - 1] == ref[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
        }
    }
    const double lcs = static_cast<double>(t[cand.size()][ref.size()]);
    if (lcs == 0) return 0.0;
    const double p = lcs / cand.size(), r = lcs / ref.size();
    return 100.0 * 2 * p * r / (p + r);
}

}  // namespace a2r2::oracle
