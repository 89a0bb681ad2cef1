#include "a2r2/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <vector>

namespace a2r2::metrics {

namespace {

using NGramCounts = std::map<std::vector<std::string>, std::size_t>;

NGramCounts ngram_counts(const Tokens& t, std::size_t n) {
    NGramCounts out;
    if (t.size() < n) return out;
    for (std::size_t i = 0; i + n <= t.size(); ++i) {
        ++out[std::vector<std::string>(t.begin() + static_cast<std::ptrdiff_t>(i),
                                       t.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return out;
}

std::size_t clipped_overlap(const NGramCounts& cand, const NGramCounts& ref) {
    std::size_t overlap = 0;
    for (const auto& [gram, count] : cand) {
        const auto it = ref.find(gram);
        if (it != ref.end()) overlap += std::min(count, it->second);
    }
    return overlap;
}

std::size_t ngram_total(std::size_t len, std::size_t n) { return len >= n ? len - n + 1 : 0; }

double f1(double overlap, double cand_total, double ref_total) {
    if (overlap <= 0.0 || cand_total <= 0.0 || ref_total <= 0.0) return 0.0;
    const double p = overlap / cand_total;
    const double r = overlap / ref_total;
    return 100.0 * 2.0 * p * r / (p + r);
}

}  // namespace

double rouge_n(const Tokens& cand, const Tokens& ref, int n) {
    if (n != 1 && n != 2) throw std::invalid_argument("rouge_n: n must be 1 or 2");
    const auto un = static_cast<std::size_t>(n);
    const auto overlap = clipped_overlap(ngram_counts(cand, un), ngram_counts(ref, un));
    return f1(static_cast<double>(overlap), static_cast<double>(ngram_total(cand.size(), un)),
              static_cast<double>(ngram_total(ref.size(), un)));
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(const Tokens& cand, const Tokens& ref) {
    return f1(static_cast<double>(lcs_length(cand, ref)), static_cast<double>(cand.size()),
              static_cast<double>(ref.size()));
}

double m_rouge(const Tokens& cand, const Tokens& ref) {
    return (rouge_n(cand, ref, 1) + rouge_n(cand, ref, 2) + rouge_l(cand, ref)) / 3.0;
}

double bleu4(const Tokens& cand, const Tokens& ref) {
    if (cand.empty()) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto total = ngram_total(cand.size(), n);
        const auto matched = clipped_overlap(ngram_counts(cand, n), ngram_counts(ref, n));
        double p;
        if (matched > 0) {
            p = static_cast<double>(matched) / static_cast<double>(total);
        } else if (n == 1) {
            return 0.0;
        } else {
            p = 1.0 / (2.0 * static_cast<double>(std::max<std::size_t>(total, 1)));
        }
        log_sum += std::log(p);
    }
    const double c = static_cast<double>(cand.size());
    const double r = static_cast<double>(ref.size());
    const double bp = std::min(1.0, std::exp(1.0 - r / c));
    return std::clamp(100.0 * bp * std::exp(log_sum / 4.0), 0.0, 100.0);
}

std::u32string utf8_to_u32(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        char32_t cp = c;
        if (c >= 0xF0 && c < 0xF8) { len = 4; cp = c & 0x07; }
        else if (c >= 0xE0) { len = 3; cp = c & 0x0F; }
        else if (c >= 0xC0) { len = 2; cp = c & 0x1F; }
        if (len > 1) {
            bool ok = i + len <= s.size();
            for (std::size_t k = 1; ok && k < len; ++k) {
                const auto cc = static_cast<unsigned char>(s[i + k]);
                ok = (cc & 0xC0) == 0x80;
                cp = (cp << 6) | (cc & 0x3F);
            }
            if (!ok) {  // invalid sequence: keep the lead byte as its own unit
                len = 1;
                cp = c;
            }
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

std::size_t edit_distance_raw(std::string_view cand, std::string_view ref) {
    return levenshtein(utf8_to_u32(cand), utf8_to_u32(ref));
}

double edit_distance(std::string_view cand, std::string_view ref) {
    const auto a = utf8_to_u32(cand);
    const auto b = utf8_to_u32(ref);
    const auto longest = std::max(a.size(), b.size());
    if (longest == 0) return 0.0;
    return 100.0 * static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

std::pair<RasterImage, RasterImage> canvas_pair(const RasterImage& a, const RasterImage& b, int min_w, int min_h) {
    const int w = std::max({a.width(), b.width(), min_w});
    const int h = std::max({a.height(), b.height(), min_h});
    return {a.padded_to(w, h), b.padded_to(w, h)};
}

double pixel_match(const RasterImage& a, const RasterImage& b) {
    const auto [ca, cb] = canvas_pair(a, b);
    const auto pa = ca.pixels();
    const auto pb = cb.pixels();
    std::size_t equal = 0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if ((pa[i] >= 128) == (pb[i] >= 128)) ++equal;
    }
    return 100.0 * static_cast<double>(equal) / static_cast<double>(pa.size());
}

namespace {

using cplx = std::complex<double>;

struct Subband {
    std::vector<cplx> row_taps;
    std::vector<cplx> col_taps;
    int radius;
};

// Complex Gabor g(x, y) = G(x) G(y) exp(i k (x cos t + y sin t)) factorizes into
// a row filter and a column filter.
std::vector<Subband> build_filter_bank() {
    std::vector<Subband> bank;
    for (double wavelength : {8.0, 16.0}) {
        const double sigma = 0.5 * wavelength;
        const int radius = static_cast<int>(std::ceil(3.0 * sigma));
        std::vector<double> gauss(2 * radius + 1);
        double sum = 0.0;
        for (int k = -radius; k <= radius; ++k) sum += gauss[k + radius] = std::exp(-k * k / (2.0 * sigma * sigma));
        for (auto& g : gauss) g /= sum;
        const double omega = 2.0 * std::numbers::pi / wavelength;
        for (double degrees : {0.0, 45.0, 90.0, 135.0}) {
            const double theta = degrees * std::numbers::pi / 180.0;
            const double kx = omega * std::cos(theta);
            const double ky = omega * std::sin(theta);
            Subband s{std::vector<cplx>(gauss.size()), std::vector<cplx>(gauss.size()), radius};
            for (int k = -radius; k <= radius; ++k) {
                s.row_taps[k + radius] = gauss[k + radius] * std::polar(1.0, kx * k);
                s.col_taps[k + radius] = gauss[k + radius] * std::polar(1.0, ky * k);
            }
            bank.push_back(std::move(s));
        }
    }
    return bank;
}

const std::vector<Subband>& filter_bank() {
    static const std::vector<Subband> bank = build_filter_bank();
    return bank;
}

// Separable filtering with edge replication.
std::vector<cplx> apply(const Subband& s, const std::vector<double>& img, int w, int h) {
    const int r = s.radius;
    std::vector<cplx> tmp(img.size());
    for (int y = 0; y < h; ++y) {
        const double* row = img.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            cplx acc = 0.0;
            for (int k = -r; k <= r; ++k) acc += s.row_taps[k + r] * row[std::clamp(x + k, 0, w - 1)];
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    std::vector<cplx> out(img.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            cplx acc = 0.0;
            for (int k = -r; k <= r; ++k) {
                acc += s.col_taps[k + r] * tmp[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x];
            }
            out[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    return out;
}

std::vector<double> to_unit(const RasterImage& img) {
    std::vector<double> out(img.pixels().size());
    std::transform(img.pixels().begin(), img.pixels().end(), out.begin(), [](std::uint8_t v) { return v / 255.0; });
    return out;
}

constexpr int kWindow = 7;
constexpr int kStride = 4;
constexpr double kStabilizer = 0.01 * kWindow * kWindow;

}  // namespace

double cw_ssim(const RasterImage& a, const RasterImage& b) {
    const auto [ca, cb] = canvas_pair(a, b, 32, 32);
    const int w = ca.width();
    const int h = ca.height();
    const auto ia = to_unit(ca);
    const auto ib = to_unit(cb);

    double total = 0.0;
    std::size_t windows = 0;
    for (const auto& band : filter_bank()) {
        const auto fa = apply(band, ia, w, h);
        const auto fb = apply(band, ib, w, h);
        for (int y = 0; y + kWindow <= h; y += kStride) {
            for (int x = 0; x + kWindow <= w; x += kStride) {
                cplx cross = 0.0;
                double energy_a = 0.0;
                double energy_b = 0.0;
                for (int dy = 0; dy < kWindow; ++dy) {
                    for (int dx = 0; dx < kWindow; ++dx) {
                        const auto idx = static_cast<std::size_t>(y + dy) * w + (x + dx);
                        cross += fa[idx] * std::conj(fb[idx]);
                        energy_a += std::norm(fa[idx]);
                        energy_b += std::norm(fb[idx]);
                    }
                }
                total += (2.0 * std::abs(cross) + kStabilizer) / (energy_a + energy_b + kStabilizer);
                ++windows;
            }
        }
    }
    return 100.0 * total / static_cast<double>(windows);
}

MetricSnapshot text_metrics(const LatexDoc& cand, const LatexDoc& ref) {
    MetricSnapshot m;
    const auto& c = cand.tokens();
    const auto& r = ref.tokens();
    m.rouge1 = rouge_n(c, r, 1);
    m.rouge2 = rouge_n(c, r, 2);
    m.rougeL = rouge_l(c, r);
    m.m_rouge = (m.rouge1 + m.rouge2 + m.rougeL) / 3.0;
    m.bleu4 = bleu4(c, r);
    m.edit_distance = edit_distance(cand.source(), ref.source());
    m.edit_raw = edit_distance_raw(cand.source(), ref.source());
    return m;
}

std::size_t token_edit_distance(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

MetricSnapshot evaluate(const LatexDoc& cand, const LatexDoc& ref, const RasterImage* cand_render,
                        const RasterImage* ref_render) {
    auto m = text_metrics(cand, ref);
    if (cand_render && ref_render) {
        m.match = pixel_match(*cand_render, *ref_render);
        m.cw_ssim = cw_ssim(*cand_render, *ref_render);
    }
    return m;
}

}  // namespace a2r2::metrics
