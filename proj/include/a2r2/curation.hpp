#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "a2r2/config.hpp"

namespace a2r2::curation {

/// One model's scores on one instance.
struct ModelScores {
    double rouge_m = 0.0;   // mean of ROUGE-1/2/L, in [0, 1]
    double bleu = 0.0;      // in [0, 1]
    double edit_raw = 0.0;  // raw edit distance, >= 0
    std::optional<double> judge;  // in [0, 10]
    double edit_norm = 0.0;       // filled by normalize_edit
};

struct CurationRecord {
    std::string instance_id;
    std::map<std::string, ModelScores> models;
};

struct CurationWeights {
    double alpha = 0.4;
    double beta = 0.4;
    double gamma = 0.2;
    double judge_coeff = 0.5;
    std::vector<std::pair<std::string, double>> model_weights;

    static CurationWeights from_settings(const CurationSettings& s);
    // Throws ConfigError unless alpha+beta+gamma = 1, model weights sum to 1, all >= 0.
    void validate() const;
};

enum class Direction { ascending, descending };
Direction parse_direction(const std::string& s);
std::string to_string(Direction d);

// Global min-max over every instance and model. Returns false (and sets all to
// 0) when every raw distance is equal.
bool normalize_edit(std::vector<CurationRecord>& records);

double composite_score(double rouge_m, double bleu, double edit_norm, const CurationWeights& w);

// Per-model S + judge_coeff * G / 10.
double model_final_score(const ModelScores& s, const CurationWeights& w);

struct FinalScores {
    std::map<std::string, double> scores;
    std::vector<std::pair<std::string, std::string>> excluded;  // id, reason
};

// Weighted sum of per-model finals. Instances missing a weighted model or a
// judge score are excluded. Expects normalize_edit to have run.
FinalScores final_scores(const std::vector<CurationRecord>& records, const CurationWeights& w);

// First k ids after sorting by score in the given direction; ties by id.
std::vector<std::string> select_subset(const std::map<std::string, double>& scores, std::size_t k, Direction d);

nlohmann::json record_to_json(const CurationRecord& r);

// Accepts {"id", "models": {name: {...}}} lines and single-model
// {"id", "model", "rouge_m", "bleu", "edit_raw", "judge"} lines; entries with
// the same id are merged, in first-seen order.
std::vector<CurationRecord> load_records(const std::vector<std::filesystem::path>& files);

// Weights, direction and the note on the ambiguous ranking direction.
nlohmann::json provenance(const CurationWeights& w, Direction d, std::size_t k, std::size_t pool,
                          const FinalScores& scores);

}  // namespace a2r2::curation
