#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace a2r2 {

using Tokens = std::vector<std::string>;

struct TokenSpan {
    std::string text;
    std::size_t offset;  // byte offset into the source
};

// Commands (backslash + letters, or backslash + one non-letter), digit runs, and
// single characters are tokens; whitespace separates and is dropped.
std::vector<TokenSpan> tokenize_latex_spans(std::string_view source);
Tokens tokenize_latex(std::string_view source);

// Tokens joined by single spaces. Re-tokenizing yields the same sequence.
std::string join_tokens(const Tokens& tokens);

// Removes markdown fences and math delimiters from model output. When fenced
// blocks are present the last one wins; otherwise text after a trailing
// "Final answer:" marker is used.
std::string strip_model_markup(std::string_view text);

/// LaTeX source with its token sequence. Tokens are derived once at
/// construction, so they always agree with the source.
class LatexDoc {
public:
    LatexDoc() = default;
    explicit LatexDoc(std::string source);

    const std::string& source() const { return source_; }
    const Tokens& tokens() const { return tokens_; }
    bool empty() const { return tokens_.empty(); }

    friend bool operator==(const LatexDoc& a, const LatexDoc& b) { return a.source_ == b.source_; }

private:
    std::string source_;
    Tokens tokens_;
};

}  // namespace a2r2
