#include "a2r2/record.hpp"

#include <cctype>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "a2r2/error.hpp"

namespace a2r2 {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kTerminations[] = {"no_differences", "t_max", "no_progress", "compile_dead_end", "aborted"};

json rect_to_json(const attnloc::BoundingBox& b) { return {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}}; }

attnloc::BoundingBox rect_from_json(const json& j) {
    return {j.at("x").get<int>(), j.at("y").get<int>(), j.at("w").get<int>(), j.at("h").get<int>()};
}

template <typename T>
std::optional<T> opt_rect(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return rect_from_json(j[key]);
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::string to_string(Termination t) { return kTerminations[static_cast<int>(t)]; }

Termination parse_termination(const std::string& s) {
    for (int i = 0; i < 5; ++i) {
        if (s == kTerminations[i]) return static_cast<Termination>(i);
    }
    throw Error("unknown termination '" + s + "'");
}

json metrics_to_json(const metrics::MetricSnapshot& m) {
    return {{"rouge1", m.rouge1},   {"rouge2", m.rouge2},     {"rougeL", m.rougeL},
            {"m_rouge", m.m_rouge}, {"bleu4", m.bleu4},       {"edit_distance", m.edit_distance},
            {"edit_raw", m.edit_raw}, {"match", m.match},     {"cw_ssim", m.cw_ssim}};
}

metrics::MetricSnapshot metrics_from_json(const json& j) {
    metrics::MetricSnapshot m;
    m.rouge1 = j.at("rouge1").get<double>();
    m.rouge2 = j.at("rouge2").get<double>();
    m.rougeL = j.at("rougeL").get<double>();
    m.m_rouge = j.at("m_rouge").get<double>();
    m.bleu4 = j.at("bleu4").get<double>();
    m.edit_distance = j.at("edit_distance").get<double>();
    m.edit_raw = j.at("edit_raw").get<std::size_t>();
    m.match = j.at("match").get<double>();
    m.cw_ssim = j.at("cw_ssim").get<double>();
    return m;
}

json diff_to_json(const DiffReport& d) {
    json items = json::array();
    for (const auto& it : d.items) {
        json e{{"index", it.index}, {"description", it.description}, {"origin", it.origin}};
        if (it.fabricated) e["fabricated"] = *it.fabricated;
        items.push_back(std::move(e));
    }
    return {{"items", std::move(items)}, {"raw_text", d.raw_text}};
}

DiffReport diff_from_json(const json& j) {
    DiffReport d;
    d.raw_text = j.value("raw_text", "");
    for (const auto& e : j.at("items")) {
        DiffItem it;
        it.index = e.at("index").get<int>();
        it.description = e.at("description").get<std::string>();
        it.origin = e.value("origin", it.index);
        if (e.contains("fabricated")) it.fabricated = e["fabricated"].get<bool>();
        d.items.push_back(std::move(it));
    }
    return d;
}

json record_to_json(const IterationRecord& r) {
    json j{{"round", r.round},
           {"hypothesis", r.hypothesis.source()},
           {"tokens", r.hypothesis.tokens()},
           {"diff", diff_to_json(r.diff)},
           {"verified_diff", diff_to_json(r.verified_diff)},
           {"verification_ran", r.verification_ran},
           {"localization", r.localization},
           {"refined", r.refined},
           {"no_progress", r.no_progress}};
    if (r.render) {
        j["render"] = {{"ok", true}, {"hash", r.render_hash}, {"width", r.render->width()}, {"height", r.render->height()}};
    } else {
        j["render"] = {{"ok", false}, {"hash", r.render_hash}, {"log", r.compile_log}};
    }
    j["region_box"] = r.region_box ? rect_to_json(*r.region_box) : json(nullptr);
    j["input_rect"] = r.input_rect ? rect_to_json(*r.input_rect) : json(nullptr);
    j["rendered_rect"] = r.rendered_rect ? rect_to_json(*r.rendered_rect) : json(nullptr);
    j["metrics"] = r.metrics ? metrics_to_json(*r.metrics) : json(nullptr);
    return j;
}

IterationRecord record_from_json(const json& j) {
    IterationRecord r;
    r.round = j.at("round").get<int>();
    r.hypothesis = LatexDoc(j.at("hypothesis").get<std::string>());
    const auto& render = j.at("render");
    r.render_hash = render.value("hash", "");
    if (!render.value("ok", false)) r.compile_log = render.value("log", "");
    r.diff = diff_from_json(j.at("diff"));
    r.verified_diff = diff_from_json(j.at("verified_diff"));
    r.verification_ran = j.value("verification_ran", false);
    r.localization = j.value("localization", "");
    r.region_box = opt_rect<attnloc::BoundingBox>(j, "region_box");
    r.input_rect = opt_rect<attnloc::PixelRect>(j, "input_rect");
    r.rendered_rect = opt_rect<attnloc::PixelRect>(j, "rendered_rect");
    if (j.contains("metrics") && !j["metrics"].is_null()) r.metrics = metrics_from_json(j["metrics"]);
    r.refined = j.value("refined", false);
    r.no_progress = j.value("no_progress", false);
    return r;
}

json result_to_json(const RunResult& r) {
    json j{{"id", r.instance_id},
           {"strategy", r.strategy},
           {"termination", to_string(r.termination)},
           {"rounds", r.rounds.size()},
           {"final", r.final.source()}};
    j["error"] = r.error ? json(*r.error) : json(nullptr);
    j["metrics"] = r.final_metrics ? metrics_to_json(*r.final_metrics) : json(nullptr);
    j["token_edit_distance"] = r.token_edit_distance ? json(*r.token_edit_distance) : json(nullptr);
    if (!r.candidates.empty()) {
        json cands = json::array();
        for (const auto& c : r.candidates) {
            cands.push_back({{"sample", c.sample}, {"latex", c.latex.source()}, {"compiled", c.compiled},
                             {"score", c.score}});
        }
        j["candidates"] = std::move(cands);
        j["selected_sample"] = r.selected_sample;
    }
    return j;
}

json summary_line(const RunResult& r) { return result_to_json(r); }

std::string artifact_dir_name(const std::string& id) {
    std::string out;
    for (unsigned char c : id) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.') {
            out += static_cast<char>(c);
        } else {
            std::ostringstream hex;
            hex << '%' << std::uppercase << std::hex << std::setw(2) << std::setfill('0') << int(c);
            out += hex.str();
        }
    }
    if (out.empty() || out == "." || out == "..") out = "_" + out;
    return out;
}

void write_artifacts(const fs::path& dir, const RunResult& result, bool overlays) {
    fs::create_directories(dir);
    if (result.input) write_png(dir / "input.png", *result.input);
    const IterationRecord* latest_regions = nullptr;
    for (const auto& rec : result.rounds) {
        const std::string k = std::to_string(rec.round);
        std::ofstream(dir / ("round_" + k + ".json")) << record_to_json(rec).dump(2) << "\n";
        if (rec.render) write_png(dir / ("round_" + k + ".png"), *rec.render);
        if (rec.regions) {
            write_png(dir / ("round_" + k + "_region_a.png"), rec.regions->first);
            write_png(dir / ("round_" + k + "_region_b.png"), rec.regions->second);
            latest_regions = &rec;
        }
        if (overlays && result.input && rec.attention_mask && rec.input_rect) {
            const auto rgb = attnloc::overlay_rgb(*result.input, *rec.attention_mask, *rec.input_rect);
            write_png_rgb(dir / ("overlay_" + k + ".png"), result.input->width(), result.input->height(), rgb);
        }
    }
    if (latest_regions) {
        write_png(dir / "region_a.png", latest_regions->regions->first);
        write_png(dir / "region_b.png", latest_regions->regions->second);
    }
    std::ofstream(dir / "final.tex") << result.final.source() << "\n";
    std::ofstream(dir / "result.json") << result_to_json(result).dump(2) << "\n";
    std::ofstream transcript(dir / "transcript.jsonl");
    for (const auto& line : result.transcript) transcript << line.dump() << "\n";
}

RunResult read_artifacts(const fs::path& dir) {
    const auto result_path = dir / "result.json";
    if (!fs::exists(result_path)) throw Error("no result.json in " + dir.string());
    RunResult r;
    try {
        const json j = json::parse(read_text(result_path));
        r.instance_id = j.at("id").get<std::string>();
        r.strategy = j.at("strategy").get<std::string>();
        r.termination = parse_termination(j.at("termination").get<std::string>());
        r.final = LatexDoc(j.at("final").get<std::string>());
        if (!j["error"].is_null()) r.error = j["error"].get<std::string>();
        if (!j["metrics"].is_null()) r.final_metrics = metrics_from_json(j["metrics"]);
        if (!j["token_edit_distance"].is_null()) r.token_edit_distance = j["token_edit_distance"].get<std::size_t>();
        const auto n_rounds = j.at("rounds").get<std::size_t>();
        for (std::size_t k = 0; k < n_rounds; ++k) {
            const auto base = "round_" + std::to_string(k);
            if (!fs::exists(dir / (base + ".json"))) continue;
            auto rec = record_from_json(json::parse(read_text(dir / (base + ".json"))));
            if (fs::exists(dir / (base + ".png"))) rec.render = read_png(dir / (base + ".png"));
            if (fs::exists(dir / (base + "_region_a.png")) && fs::exists(dir / (base + "_region_b.png"))) {
                rec.regions.emplace(read_png(dir / (base + "_region_a.png")), read_png(dir / (base + "_region_b.png")));
            }
            r.rounds.push_back(std::move(rec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed run artifacts in " + dir.string() + ": " + e.what());
    }
    if (fs::exists(dir / "input.png")) r.input = read_png(dir / "input.png");
    if (fs::exists(dir / "transcript.jsonl")) {
        std::ifstream in(dir / "transcript.jsonl");
        for (std::string line; std::getline(in, line);) {
            if (!line.empty()) r.transcript.push_back(json::parse(line));
        }
    }
    return r;
}

}  // namespace a2r2
