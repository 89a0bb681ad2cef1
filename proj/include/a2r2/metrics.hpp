#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "a2r2/image.hpp"
#include "a2r2/latex.hpp"

namespace a2r2::metrics {

// All scores are on a 0..100 scale. edit_distance is lower-is-better.
struct MetricSnapshot {
    double rouge1 = 0;
    double rouge2 = 0;
    double rougeL = 0;
    double m_rouge = 0;
    double bleu4 = 0;
    double edit_distance = 0;
    std::size_t edit_raw = 0;  // character-level Levenshtein count
    double match = 0;
    double cw_ssim = 0;
};

// ROUGE-N F1 x 100 with clipped n-gram counts; n is 1 or 2.
double rouge_n(const Tokens& cand, const Tokens& ref, int n);

// ROUGE-L F1 x 100 from the longest common subsequence.
double rouge_l(const Tokens& cand, const Tokens& ref);
std::size_t lcs_length(const Tokens& a, const Tokens& b);

double m_rouge(const Tokens& cand, const Tokens& ref);

/// BLEU-4 x 100: geometric mean of modified n-gram precisions (n = 1..4) times
/// the brevity penalty min(1, exp(1 - |ref|/|cand|)). A zero precision for
/// n >= 2 is replaced by 1 / (2 * candidate n-gram count); when the candidate has
/// no n-grams of that order the count is taken as 1. Empty candidate scores 0.
double bleu4(const Tokens& cand, const Tokens& ref);

std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
std::u32string utf8_to_u32(std::string_view s);
// Levenshtein distance over token sequences.
std::size_t token_edit_distance(const Tokens& a, const Tokens& b);

// 100 * levenshtein / max(|cand|, |ref|) over Unicode code points; 0 when both empty.
double edit_distance(std::string_view cand, std::string_view ref);
std::size_t edit_distance_raw(std::string_view cand, std::string_view ref);

// Both images white-padded (top-left anchored) to common dimensions, at least min_w x min_h.
std::pair<RasterImage, RasterImage> canvas_pair(const RasterImage& a, const RasterImage& b, int min_w = 1,
                                                int min_h = 1);

// 100 * fraction of equal pixels after canvas normalization and binarization at 128.
double pixel_match(const RasterImage& a, const RasterImage& b);

/// Complex-wavelet structural similarity x 100.
///
/// Both images are canvas-normalized (at least 32x32) and decomposed by a complex
/// Gabor bank: wavelengths 8 and 16 px, orientations 0/45/90/135 degrees,
/// Gaussian envelope sigma = wavelength / 2. In every subband a 7x7 window slides
/// with stride 4 and scores (2|sum a conj(b)| + K) / (sum|a|^2 + sum|b|^2 + K),
/// K = 0.01 * 49. The result is the mean over all windows and subbands.
double cw_ssim(const RasterImage& a, const RasterImage& b);

MetricSnapshot text_metrics(const LatexDoc& cand, const LatexDoc& ref);

// Text metrics plus Match and CW-SSIM on the renders; a missing candidate render
// (compile failure) scores 0 on both visual metrics.
MetricSnapshot evaluate(const LatexDoc& cand, const LatexDoc& ref, const RasterImage* cand_render,
                        const RasterImage* ref_render);

}  // namespace a2r2::metrics
