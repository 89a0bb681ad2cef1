#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace a2r2 {

inline constexpr std::string_view kNoDifferences = "NO DIFFERENCES";

struct DiffItem {
    int index = 0;   // 1-based, consecutive within its report
    std::string description;
    int origin = 0;  // index of the item in the comparison report this one derives from
    // Ground truth from a scripted backend: was this item fabricated? Unset for real models.
    std::optional<bool> fabricated;
};

/// Numbered list of visual differences (D from comparison, D' after verification).
struct DiffReport {
    std::vector<DiffItem> items;
    std::string raw_text;

    bool empty() const { return items.empty(); }
    // "1. ...\n2. ..." or the sentinel when empty.
    std::string numbered() const;

    static DiffReport from_descriptions(const std::vector<std::string>& descriptions);
};

// Comparison output: the sentinel line maps to an empty report, numbered or
// bulleted lines to items, and any other non-empty text to a single item.
DiffReport parse_diff(std::string_view text);

// Verification output: keeps the items of `original` whose numbers the model
// repeats (with its possibly refined wording). The sentinel confirms nothing;
// text without any numbered line is inconclusive and keeps `original` as is.
DiffReport parse_verified(const DiffReport& original, std::string_view text);

}  // namespace a2r2
