#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "a2r2/attnloc.hpp"
#include "a2r2/diff.hpp"
#include "a2r2/image.hpp"
#include "a2r2/latex.hpp"
#include "a2r2/metrics.hpp"

namespace a2r2 {

// `aborted` marks a run cut short by an unrecoverable backend failure; its
// completed rounds are still persisted.
enum class Termination { no_differences, t_max, no_progress, compile_dead_end, aborted };

std::string to_string(Termination t);
Termination parse_termination(const std::string& s);

/// State of one loop round.
struct IterationRecord {
    int round = 0;
    LatexDoc hypothesis;
    std::optional<RasterImage> render;  // empty on compile failure
    std::string render_hash;
    std::string compile_log;
    DiffReport diff;
    DiffReport verified_diff;
    bool verification_ran = false;
    // "attention", "skipped", or "fallback: <reason>" when whole images were used.
    std::string localization;
    std::optional<attnloc::BoundingBox> region_box;  // attention-grid units
    std::optional<attnloc::PixelRect> input_rect;
    std::optional<attnloc::PixelRect> rendered_rect;
    std::optional<std::pair<RasterImage, RasterImage>> regions;
    std::optional<attnloc::BinaryMask> attention_mask;  // in memory only, for overlays
    std::optional<metrics::MetricSnapshot> metrics;
    bool refined = false;
    bool no_progress = false;
};

struct Candidate {
    int sample = 0;
    LatexDoc latex;
    bool compiled = false;
    double score = 0.0;  // cw_ssim against the input image
};

struct RunResult {
    std::string instance_id;
    std::string strategy;
    LatexDoc final;
    std::vector<IterationRecord> rounds;
    Termination termination = Termination::t_max;
    std::optional<std::string> error;
    std::optional<metrics::MetricSnapshot> final_metrics;
    std::optional<std::size_t> token_edit_distance;  // final vs ground truth
    std::vector<Candidate> candidates;                // best_of_n only
    int selected_sample = -1;
    std::optional<RasterImage> input;
    std::vector<nlohmann::json> transcript;
};

nlohmann::json metrics_to_json(const metrics::MetricSnapshot& m);
metrics::MetricSnapshot metrics_from_json(const nlohmann::json& j);

nlohmann::json diff_to_json(const DiffReport& d);
DiffReport diff_from_json(const nlohmann::json& j);

// Images are not embedded; they live next to the JSON as PNG files.
nlohmann::json record_to_json(const IterationRecord& r);
IterationRecord record_from_json(const nlohmann::json& j);

nlohmann::json result_to_json(const RunResult& r);

// One line of the run summary. Contains no timings, so equal runs give equal lines.
nlohmann::json summary_line(const RunResult& r);

// File-system-safe directory name for an instance id.
std::string artifact_dir_name(const std::string& instance_id);

// Writes input.png, round_<k>.json/.png, region crops, optional overlays,
// final.tex, result.json and transcript.jsonl under `dir`.
void write_artifacts(const std::filesystem::path& dir, const RunResult& result, bool overlays);

// Reads a directory written by write_artifacts. Missing optional files are
// tolerated; a missing result.json throws Error.
RunResult read_artifacts(const std::filesystem::path& dir);

}  // namespace a2r2
