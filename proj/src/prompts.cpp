#include "a2r2/prompts.hpp"

#include <cctype>
#include <set>
#include <vector>

#include "a2r2/error.hpp"

namespace a2r2 {

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates p;
    p.generation =
        "Transcribe the mathematical content of image {image} into LaTeX. "
        "Reply with the LaTeX source only, without $ delimiters or explanations.";
    p.comparison =
        "Image {image_a} is an original formula. Image {image_b} was rendered from a LaTeX "
        "transcription of it. List every visual difference between them as a numbered list "
        "(\"1. ...\"), one difference per line, saying what the original shows and what the "
        "rendering shows. If the two images show identical content, reply with the single "
        "line NO DIFFERENCES.";
    p.verification =
        "These differences were reported between an original formula and its rendering:\n"
        "{diff}\n"
        "Image {image_a} is a crop of the original and image {image_b} the matching crop of the "
        "rendering. Check every reported difference against the crops. Reply with a numbered "
        "list of only the differences you can confirm, keeping their original numbers. If none "
        "can be confirmed, reply with the single line NO DIFFERENCES.";
    p.refinement =
        "Current LaTeX:\n{latex}\n"
        "Confirmed differences between the original {image_a} and the rendering {image_b}:\n"
        "{diff}\n"
        "Correct only the parts of the LaTeX responsible for these differences and keep "
        "everything else unchanged. Reply with the full corrected LaTeX only.";
    p.judge =
        "Image {image_a} is a reference formula and image {image_b} a reproduction of it. "
        "Rate how faithfully the reproduction matches the reference on a scale from 0 to 10. "
        "Reply with the number only.";
    p.audit =
        "Image {image_a} is an original formula and image {image_b} its rendering. A model "
        "claimed this difference:\n{diff}\n"
        "Does the claim describe a real discrepancy between the two images? Reply with REAL "
        "or HALLUCINATED.";
    p.cot_suffix = "Let's think step by step.";
    return p;
}

namespace {

std::set<std::string> placeholders(std::string_view tpl) {
    std::set<std::string> out;
    for (std::size_t i = 0; i < tpl.size(); ++i) {
        if (tpl[i] != '{') continue;
        const auto close = tpl.find('}', i + 1);
        if (close == std::string_view::npos) break;
        const auto name = tpl.substr(i + 1, close - i - 1);
        bool ident = !name.empty();
        for (char c : name) ident = ident && (std::isalnum(static_cast<unsigned char>(c)) || c == '_');
        if (ident) out.insert(std::string(name));
        i = close;
    }
    return out;
}

void check(const std::string& role, const std::string& tpl, const std::set<std::string>& allowed) {
    for (const auto& name : placeholders(tpl)) {
        if (!allowed.count(name)) {
            throw ConfigError("prompt template '" + role + "' uses placeholder {" + name +
                              "} which is not available at its call site");
        }
    }
}

}  // namespace

void PromptTemplates::validate() const {
    check("generation", generation, {"image"});
    check("comparison", comparison, {"image_a", "image_b"});
    check("verification", verification, {"image_a", "image_b", "diff"});
    check("refinement", refinement, {"image_a", "image_b", "latex", "diff"});
    check("judge", judge, {"image_a", "image_b"});
    check("audit", audit, {"image_a", "image_b", "diff"});
    check("cot_suffix", cot_suffix, {});
}

std::string fill_template(std::string_view tpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tpl.size());
    std::size_t i = 0;
    while (i < tpl.size()) {
        if (tpl[i] == '{') {
            const auto close = tpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                const std::string name(tpl.substr(i + 1, close - i - 1));
                const auto names = placeholders(tpl.substr(i, close - i + 1));
                if (!names.empty()) {
                    const auto it = values.find(name);
                    if (it == values.end()) throw ConfigError("unresolved prompt placeholder {" + name + "}");
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += tpl[i++];
    }
    return out;
}

}  // namespace a2r2
