#include "a2r2/dataset.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <unordered_set>

#include "a2r2/error.hpp"

namespace a2r2 {

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open dataset " + path.string());
    }
    const auto base = path.parent_path();
    Dataset out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DatasetError(lineno, std::string("invalid JSON: ") + e.what());
        }
        if (!rec.is_object()) throw DatasetError(lineno, "record is not an object");
        if (!rec.contains("id") || !rec["id"].is_string()) throw DatasetError(lineno, "missing string field \"id\"");
        if (!rec.contains("image") || !rec["image"].is_string()) {
            throw DatasetError(lineno, "missing string field \"image\"");
        }
        if (rec.contains("latex") && !rec["latex"].is_null() && !rec["latex"].is_string()) {
            throw DatasetError(lineno, "field \"latex\" must be a string");
        }
        auto id = rec["id"].get<std::string>();
        if (!seen.insert(id).second) throw DatasetError(lineno, "duplicate id \"" + id + "\"");

        const auto image_path = base / rec["image"].get<std::string>();
        if (!std::filesystem::exists(image_path)) {
            out.errors.push_back({lineno, id, "image not found: " + image_path.string()});
            continue;
        }
        std::optional<LatexDoc> gt;
        if (rec.contains("latex") && rec["latex"].is_string()) gt.emplace(rec["latex"].get<std::string>());
        try {
            out.instances.push_back({std::move(id), read_png(image_path), std::move(gt)});
        } catch (const Error& e) {
            out.errors.push_back({lineno, rec["id"].get<std::string>(), e.what()});
        }
    }
    return out;
}

}  // namespace a2r2
