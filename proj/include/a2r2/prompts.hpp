#pragma once

#include <map>
#include <string>
#include <string_view>

namespace a2r2 {

// Placeholders: {image}, {image_a}, {image_b}, {latex}, {diff}.
struct PromptTemplates {
    std::string generation;
    std::string comparison;
    std::string verification;
    std::string refinement;
    std::string judge;
    std::string audit;       // judge call classifying one reported difference
    std::string cot_suffix;  // appended to the generation prompt by the CoT baseline

    static PromptTemplates defaults();

    // Throws ConfigError when a template uses a placeholder its call site cannot fill.
    void validate() const;
};

// Substitutes {name} placeholders; an unknown name throws ConfigError.
std::string fill_template(std::string_view tpl, const std::map<std::string, std::string>& values);

}  // namespace a2r2
