#include "a2r2/diff.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace a2r2 {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool is_sentinel(std::string_view line) {
    line = trim(line);
    while (!line.empty() && (line.back() == '.' || line.back() == '!')) line.remove_suffix(1);
    if (line.size() != kNoDifferences.size()) return false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (std::toupper(static_cast<unsigned char>(line[i])) != kNoDifferences[i]) return false;
    }
    return true;
}

struct ListLine {
    std::optional<int> number;  // absent for bullets
    std::string text;
};

// "12. text", "12) text", "- text", "* text"
std::optional<ListLine> list_line(std::string_view line) {
    line = trim(line);
    if (line.empty()) return std::nullopt;
    if (line[0] == '-' || line[0] == '*') {
        if (line.size() > 1 && line[1] == ' ') return ListLine{std::nullopt, std::string(trim(line.substr(2)))};
        return std::nullopt;
    }
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i == 0 || i > 6 || i >= line.size() || (line[i] != '.' && line[i] != ')')) return std::nullopt;
    if (i + 1 < line.size() && !std::isspace(static_cast<unsigned char>(line[i + 1]))) return std::nullopt;
    return ListLine{std::stoi(std::string(line.substr(0, i))), std::string(trim(line.substr(i + 1)))};
}

std::vector<ListLine> list_items(std::string_view text) {
    std::vector<ListLine> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        const auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        if (auto item = list_line(line)) {
            out.push_back(std::move(*item));
        } else if (!out.empty() && !trim(line).empty() && !is_sentinel(line)) {
            out.back().text += ' ';
            out.back().text += trim(line);
        }
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    return out;
}

}  // namespace

std::string DiffReport::numbered() const {
    if (items.empty()) return std::string(kNoDifferences);
    std::string out;
    for (const auto& item : items) {
        if (!out.empty()) out += '\n';
        out += std::to_string(item.index) + ". " + item.description;
    }
    return out;
}

DiffReport DiffReport::from_descriptions(const std::vector<std::string>& descriptions) {
    DiffReport r;
    for (const auto& d : descriptions) {
        const int idx = static_cast<int>(r.items.size()) + 1;
        r.items.push_back({idx, d, idx, std::nullopt});
    }
    r.raw_text = r.numbered();
    return r;
}

DiffReport parse_diff(std::string_view text) {
    DiffReport r;
    r.raw_text = std::string(text);
    const auto body = trim(text);
    if (body.empty()) return r;
    const auto lines = list_items(body);
    if (lines.empty()) {
        std::size_t start = 0;
        bool sentinel = false;
        while (start <= body.size()) {
            const auto nl = body.find('\n', start);
            sentinel = sentinel || is_sentinel(body.substr(start, nl == std::string_view::npos ? nl : nl - start));
            if (nl == std::string_view::npos) break;
            start = nl + 1;
        }
        if (sentinel) return r;
        r.items.push_back({1, std::string(body), 1, std::nullopt});
        return r;
    }
    for (const auto& l : lines) {
        if (l.text.empty()) continue;
        const int idx = static_cast<int>(r.items.size()) + 1;
        r.items.push_back({idx, l.text, idx, std::nullopt});
    }
    return r;
}

DiffReport parse_verified(const DiffReport& original, std::string_view text) {
    DiffReport r;
    r.raw_text = std::string(text);
    const auto body = trim(text);
    const auto lines = list_items(body);
    bool any_numbered = false;
    for (const auto& l : lines) any_numbered = any_numbered || l.number.has_value();
    if (!any_numbered) {
        bool sentinel = false;
        std::size_t start = 0;
        while (start <= body.size()) {
            const auto nl = body.find('\n', start);
            sentinel = sentinel || is_sentinel(body.substr(start, nl == std::string_view::npos ? nl : nl - start));
            if (nl == std::string_view::npos) break;
            start = nl + 1;
        }
        if (sentinel) return r;
        r = original;
        r.raw_text = std::string(text);
        return r;
    }
    std::set<int> taken;
    for (const auto& l : lines) {
        if (!l.number || taken.count(*l.number)) continue;
        const auto it = std::find_if(original.items.begin(), original.items.end(),
                                     [&](const DiffItem& d) { return d.index == *l.number; });
        if (it == original.items.end()) continue;
        taken.insert(*l.number);
        const int idx = static_cast<int>(r.items.size()) + 1;
        r.items.push_back({idx, l.text.empty() ? it->description : l.text, it->origin, it->fabricated});
    }
    return r;
}

}  // namespace a2r2
