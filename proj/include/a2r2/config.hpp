#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "a2r2/prompts.hpp"

namespace a2r2 {

enum class Strategy { a2r2, direct, cot, best_of_n };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& s);

// How the attention layer range is chosen when none is given explicitly.
enum class LayerPolicy {
    explicit_range,   // use RunConfig::layer_range
    cross_attention,  // a single cross-attention layer (13 by default)
    central_eighth,   // ceil(L/8) layers centred at floor(L/2)
};

struct LayerRange {
    int start;
    int end;  // inclusive
    int count() const { return end - start + 1; }
    friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

// ceil(total/8) consecutive layers centred on floor(total/2), clamped to [0, total).
LayerRange central_eighth(int total_layers);

struct RunConfig {
    int t_max = 2;
    double percentile = 75.0;
    int dilation_kernel = 3;
    std::optional<LayerRange> layer_range;
    LayerPolicy layer_policy = LayerPolicy::central_eighth;
    int cross_attention_layer = 13;
    bool ablate_al_fv = false;
    Strategy strategy = Strategy::a2r2;
    int n_samples = 8;
    PromptTemplates prompts = PromptTemplates::defaults();
    std::string backend_endpoint = "mock:";
    int parallel_workers = 1;
    bool emit_overlays = false;

    // Throws ConfigError on any violated invariant.
    void validate() const;

    // Layer range for a host exposing total_layers layers.
    LayerRange resolve_layers(int total_layers) const;
};

struct BackendSettings {
    std::string judge_endpoint;  // empty: reuse the main endpoint
    int max_attempts = 3;
    int backoff_ms = 250;
    double request_timeout_s = 120.0;
    int max_in_flight = 4;
};

struct RenderSettings {
    std::string engine = "auto";  // auto | pdflatex | mathtext
    int dpi = 200;
    double timeout_s = 60.0;
    int max_concurrent = 2;
    std::string latex_bin;   // A2R2_LATEX_BIN
    std::string raster_bin;  // A2R2_RASTER_BIN
    std::string cache_dir;   // A2R2_CACHE_DIR
    std::string mathtext_script;
    std::string python_bin = "python3";
};

struct CurationSettings {
    double alpha = 0.4;
    double beta = 0.4;
    double gamma = 0.2;
    double judge_coeff = 0.5;
    std::vector<std::pair<std::string, double>> model_weights = {
        {"qwen2.5-vl-7b", 0.30}, {"qwen2.5-vl-32b", 0.40}, {"llama-3.2-11b-vision", 0.30}};
    std::string direction = "asc";
};

/// Whole configuration tree, as stored in the config file.
struct Settings {
    std::uint64_t seed = 0;
    RunConfig run;
    BackendSettings backend;
    RenderSettings render;
    CurationSettings curation;
};

nlohmann::json default_config_json();
Settings settings_from_json(const nlohmann::json& j);
nlohmann::json settings_to_json(const Settings& s);

// Applies "dotted.key=value"; value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& tree, const std::string& assignment);

// Defaults <- environment (A2R2_*) <- file (if any) <- overrides, then validated.
Settings load_settings(const std::optional<std::filesystem::path>& file,
                       const std::vector<std::string>& overrides);

}  // namespace a2r2
