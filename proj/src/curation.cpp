#include "a2r2/curation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <spdlog/spdlog.h>

#include "a2r2/error.hpp"

namespace a2r2::curation {

using nlohmann::json;

CurationWeights CurationWeights::from_settings(const CurationSettings& s) {
    return {s.alpha, s.beta, s.gamma, s.judge_coeff, s.model_weights};
}

void CurationWeights::validate() const {
    constexpr double kTol = 1e-9;
    if (alpha < 0 || beta < 0 || gamma < 0 || judge_coeff < 0) throw ConfigError("curation weights must be >= 0");
    if (std::abs(alpha + beta + gamma - 1.0) > kTol) throw ConfigError("alpha + beta + gamma must equal 1");
    if (model_weights.empty()) throw ConfigError("curation needs at least one model weight");
    double sum = 0.0;
    for (const auto& [name, w] : model_weights) {
        if (w < 0) throw ConfigError("model weight for '" + name + "' must be >= 0");
        sum += w;
    }
    if (std::abs(sum - 1.0) > kTol) throw ConfigError("model weights must sum to 1");
}

Direction parse_direction(const std::string& s) {
    if (s == "asc" || s == "ascending") return Direction::ascending;
    if (s == "desc" || s == "descending") return Direction::descending;
    throw ConfigError("direction must be asc or desc, got '" + s + "'");
}

std::string to_string(Direction d) { return d == Direction::ascending ? "asc" : "desc"; }

bool normalize_edit(std::vector<CurationRecord>& records) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& r : records) {
        for (const auto& [_, s] : r.models) {
            lo = std::min(lo, s.edit_raw);
            hi = std::max(hi, s.edit_raw);
        }
    }
    const bool spread = hi > lo;
    if (!spread) spdlog::warn("all edit distances are equal; normalized edit distance set to 0");
    for (auto& r : records) {
        for (auto& [_, s] : r.models) s.edit_norm = spread ? (s.edit_raw - lo) / (hi - lo) : 0.0;
    }
    return spread;
}

double composite_score(double rouge_m, double bleu, double edit_norm, const CurationWeights& w) {
    return w.alpha * rouge_m + w.beta * bleu + w.gamma * (1.0 - edit_norm);
}

double model_final_score(const ModelScores& s, const CurationWeights& w) {
    return composite_score(s.rouge_m, s.bleu, s.edit_norm, w) + w.judge_coeff * (s.judge.value_or(0.0) / 10.0);
}

FinalScores final_scores(const std::vector<CurationRecord>& records, const CurationWeights& w) {
    FinalScores out;
    for (const auto& r : records) {
        double total = 0.0;
        std::string reason;
        for (const auto& [model, weight] : w.model_weights) {
            const auto it = r.models.find(model);
            if (it == r.models.end()) {
                reason = "no scores for model '" + model + "'";
                break;
            }
            if (!it->second.judge) {
                reason = "no judge score for model '" + model + "'";
                break;
            }
            total += weight * model_final_score(it->second, w);
        }
        if (!reason.empty()) {
            spdlog::warn("instance '{}' excluded from curation: {}", r.instance_id, reason);
            out.excluded.emplace_back(r.instance_id, reason);
            continue;
        }
        out.scores[r.instance_id] = total;
    }
    return out;
}

std::vector<std::string> select_subset(const std::map<std::string, double>& scores, std::size_t k, Direction d) {
    std::vector<std::pair<std::string, double>> v(scores.begin(), scores.end());
    std::sort(v.begin(), v.end(), [d](const auto& a, const auto& b) {
        if (a.second != b.second) return d == Direction::ascending ? a.second < b.second : a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, v.size()); ++i) out.push_back(v[i].first);
    return out;
}

json record_to_json(const CurationRecord& r) {
    json models = json::object();
    for (const auto& [name, s] : r.models) {
        models[name] = {{"rouge_m", s.rouge_m}, {"bleu", s.bleu}, {"edit_raw", s.edit_raw},
                        {"judge", s.judge ? json(*s.judge) : json(nullptr)}};
    }
    return {{"id", r.instance_id}, {"models", std::move(models)}};
}

namespace {

ModelScores scores_from_json(const json& j) {
    ModelScores s;
    s.rouge_m = j.at("rouge_m").get<double>();
    s.bleu = j.at("bleu").get<double>();
    s.edit_raw = j.at("edit_raw").get<double>();
    if (j.contains("judge") && !j["judge"].is_null()) s.judge = j["judge"].get<double>();
    if (s.rouge_m < 0 || s.rouge_m > 1 || s.bleu < 0 || s.bleu > 1 || s.edit_raw < 0 ||
        (s.judge && (*s.judge < 0 || *s.judge > 10))) {
        throw std::out_of_range("score outside its range");
    }
    return s;
}

}  // namespace

std::vector<CurationRecord> load_records(const std::vector<std::filesystem::path>& files) {
    std::vector<CurationRecord> out;
    std::map<std::string, std::size_t> index;
    for (const auto& path : files) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open scores file " + path.string());
        std::size_t line_no = 0;
        for (std::string line; std::getline(in, line);) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                const json j = json::parse(line);
                const auto id = j.at("id").get<std::string>();
                auto [it, fresh] = index.emplace(id, out.size());
                if (fresh) out.push_back({id, {}});
                auto& rec = out[it->second];
                if (j.contains("models")) {
                    for (const auto& [name, s] : j["models"].items()) rec.models[name] = scores_from_json(s);
                } else {
                    rec.models[j.at("model").get<std::string>()] = scores_from_json(j);
                }
            } catch (const std::exception& e) {
                throw DatasetError(line_no, path.string() + ": " + e.what());
            }
        }
    }
    return out;
}

json provenance(const CurationWeights& w, Direction d, std::size_t k, std::size_t pool, const FinalScores& scores) {
    json models = json::array();
    for (const auto& [name, weight] : w.model_weights) models.push_back({{"name", name}, {"weight", weight}});
    json excluded = json::array();
    for (const auto& [id, reason] : scores.excluded) excluded.push_back({{"id", id}, {"reason", reason}});
    return {{"alpha", w.alpha},
            {"beta", w.beta},
            {"gamma", w.gamma},
            {"judge_coeff", w.judge_coeff},
            {"models", std::move(models)},
            {"direction", to_string(d)},
            {"k", k},
            {"pool", pool},
            {"scored", scores.scores.size()},
            {"excluded", std::move(excluded)},
            {"direction_note",
             "High final scores mean the models reproduced the formula well, so descending order keeps the easiest "
             "instances and ascending order the hardest. Check that the direction matches the intended subset."}};
}

}  // namespace a2r2::curation
