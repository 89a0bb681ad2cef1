#include "a2r2/latex.hpp"

#include <algorithm>
#include <cctype>

namespace a2r2 {

namespace {

bool is_ascii_letter(unsigned char c) { return std::isalpha(c) != 0 && c < 0x80; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Length of the UTF-8 sequence starting at s[i], clipped to the input.
std::size_t code_point_length(std::string_view s, std::size_t i) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t n = 1;
    if (c >= 0xF0) n = 4;
    else if (c >= 0xE0) n = 3;
    else if (c >= 0xC0) n = 2;
    n = std::min(n, s.size() - i);
    // Stop at the first byte that is not a continuation byte.
    for (std::size_t k = 1; k < n; ++k) {
        if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return k;
    }
    return n;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }
bool ends_with(std::string_view s, std::string_view p) {
    return s.size() >= p.size() && s.substr(s.size() - p.size()) == p;
}

}  // namespace

std::vector<TokenSpan> tokenize_latex_spans(std::string_view s) {
    std::vector<TokenSpan> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        if (is_space(c)) {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        if (c == '\\') {
            if (j < s.size() && is_ascii_letter(static_cast<unsigned char>(s[j]))) {
                while (j < s.size() && is_ascii_letter(static_cast<unsigned char>(s[j]))) ++j;
            } else if (j < s.size()) {
                j += code_point_length(s, j);
            }
        } else if (is_digit(c)) {
            while (j < s.size() && is_digit(static_cast<unsigned char>(s[j]))) ++j;
        } else {
            j = i + code_point_length(s, i);
        }
        out.push_back({std::string(s.substr(i, j - i)), i});
        i = j;
    }
    return out;
}

Tokens tokenize_latex(std::string_view source) {
    Tokens out;
    for (auto& t : tokenize_latex_spans(source)) out.push_back(std::move(t.text));
    return out;
}

std::string join_tokens(const Tokens& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

std::string strip_model_markup(std::string_view text) {
    std::string_view body = text;

    // Last fenced block, if any.
    std::size_t search = 0;
    std::string_view last_block;
    bool found_block = false;
    while (true) {
        const auto open = text.find("```", search);
        if (open == std::string_view::npos) break;
        auto content_start = text.find('\n', open + 3);
        if (content_start == std::string_view::npos) break;
        const auto close = text.find("```", content_start + 1);
        if (close == std::string_view::npos) break;
        last_block = text.substr(content_start + 1, close - content_start - 1);
        found_block = true;
        search = close + 3;
    }
    if (found_block) {
        body = last_block;
    } else {
        for (std::string_view marker : {"Final answer:", "Final Answer:", "FINAL ANSWER:"}) {
            const auto pos = text.rfind(marker);
            if (pos != std::string_view::npos) {
                body = text.substr(pos + marker.size());
                break;
            }
        }
    }

    body = trim(body);
    // Peel math delimiters, outermost first.
    bool changed = true;
    while (changed) {
        changed = false;
        for (auto [open, close] : {std::pair<std::string_view, std::string_view>{"$$", "$$"},
                                   {"\\[", "\\]"},
                                   {"\\(", "\\)"},
                                   {"$", "$"}}) {
            if (body.size() >= open.size() + close.size() && starts_with(body, open) && ends_with(body, close)) {
                body = trim(body.substr(open.size(), body.size() - open.size() - close.size()));
                changed = true;
                break;
            }
        }
    }
    return std::string(body);
}

LatexDoc::LatexDoc(std::string source) : source_(std::move(source)), tokens_(tokenize_latex(source_)) {}

}  // namespace a2r2
