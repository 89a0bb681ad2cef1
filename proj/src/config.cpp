#include "a2r2/config.hpp"

#include <algorithm>

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "a2r2/error.hpp"

namespace a2r2 {

using nlohmann::json;

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::a2r2: return "a2r2";
        case Strategy::direct: return "direct";
        case Strategy::cot: return "cot";
        case Strategy::best_of_n: return "best_of_n";
    }
    return "a2r2";
}

Strategy parse_strategy(const std::string& s) {
    if (s == "a2r2") return Strategy::a2r2;
    if (s == "direct") return Strategy::direct;
    if (s == "cot") return Strategy::cot;
    if (s == "best_of_n") return Strategy::best_of_n;
    throw ConfigError("unknown strategy '" + s + "' (expected a2r2, direct, cot or best_of_n)");
}

namespace {

std::string to_string(LayerPolicy p) {
    switch (p) {
        case LayerPolicy::explicit_range: return "explicit";
        case LayerPolicy::cross_attention: return "cross_attention";
        case LayerPolicy::central_eighth: return "central_eighth";
    }
    return "central_eighth";
}

LayerPolicy parse_policy(const std::string& s) {
    if (s == "explicit") return LayerPolicy::explicit_range;
    if (s == "cross_attention") return LayerPolicy::cross_attention;
    if (s == "central_eighth") return LayerPolicy::central_eighth;
    throw ConfigError("unknown layer_policy '" + s + "'");
}

// Every key in `given` must exist in `schema` (objects recursively).
void check_known_keys(const json& schema, const json& given, const std::string& prefix) {
    if (!given.is_object()) return;
    for (auto it = given.begin(); it != given.end(); ++it) {
        const auto key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!schema.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
        if (schema[it.key()].is_object()) check_known_keys(schema[it.key()], it.value(), key);
    }
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
    try {
        return j.at(section).at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + section + "." + key + "': " + e.what());
    }
}

const char* env(const char* name) {
    const char* v = std::getenv(name);
    return (v && *v) ? v : nullptr;
}

}  // namespace

LayerRange central_eighth(int total_layers) {
    if (total_layers < 1) throw ConfigError("central_eighth: host reports no layers");
    const int count = (total_layers + 7) / 8;
    const int centre = total_layers / 2;
    int start = centre - count / 2;
    start = std::clamp(start, 0, total_layers - count);
    return {start, start + count - 1};
}

void RunConfig::validate() const {
    if (t_max < 1) throw ConfigError("t_max must be >= 1");
    if (!(percentile > 0.0 && percentile < 100.0)) throw ConfigError("percentile must lie in (0, 100)");
    if (dilation_kernel < 1 || dilation_kernel % 2 == 0) throw ConfigError("dilation_kernel must be odd and >= 1");
    if (layer_range && layer_range->start > layer_range->end) throw ConfigError("layer_range start must be <= end");
    if (layer_policy == LayerPolicy::explicit_range && !layer_range) {
        throw ConfigError("layer_policy 'explicit' requires layer_range");
    }
    if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
    if (parallel_workers < 1) throw ConfigError("parallel_workers must be >= 1");
    prompts.validate();
}

LayerRange RunConfig::resolve_layers(int total_layers) const {
    if (layer_range) return *layer_range;
    switch (layer_policy) {
        case LayerPolicy::cross_attention: return {cross_attention_layer, cross_attention_layer};
        case LayerPolicy::central_eighth: return central_eighth(total_layers);
        case LayerPolicy::explicit_range: break;
    }
    throw ConfigError("layer_policy 'explicit' requires layer_range");
}

json default_config_json() {
    return settings_to_json(Settings{});
}

json settings_to_json(const Settings& s) {
    const auto& r = s.run;
    json models = json::array();
    for (const auto& [name, w] : s.curation.model_weights) models.push_back({{"name", name}, {"weight", w}});
    return {
        {"seed", s.seed},
        {"loop",
         {{"t_max", r.t_max},
          {"strategy", to_string(r.strategy)},
          {"n_samples", r.n_samples},
          {"ablate_al_fv", r.ablate_al_fv},
          {"parallel_workers", r.parallel_workers}}},
        {"localization",
         {{"percentile", r.percentile},
          {"dilation_kernel", r.dilation_kernel},
          {"layer_range", r.layer_range ? json::array({r.layer_range->start, r.layer_range->end}) : json(nullptr)},
          {"layer_policy", to_string(r.layer_policy)},
          {"cross_attention_layer", r.cross_attention_layer},
          {"overlays", r.emit_overlays}}},
        {"backend",
         {{"endpoint", r.backend_endpoint},
          {"judge_endpoint", s.backend.judge_endpoint},
          {"max_attempts", s.backend.max_attempts},
          {"backoff_ms", s.backend.backoff_ms},
          {"request_timeout_s", s.backend.request_timeout_s},
          {"max_in_flight", s.backend.max_in_flight}}},
        {"render",
         {{"engine", s.render.engine},
          {"dpi", s.render.dpi},
          {"timeout_s", s.render.timeout_s},
          {"max_concurrent", s.render.max_concurrent},
          {"latex_bin", s.render.latex_bin},
          {"raster_bin", s.render.raster_bin},
          {"cache_dir", s.render.cache_dir},
          {"mathtext_script", s.render.mathtext_script},
          {"python_bin", s.render.python_bin}}},
        {"prompts",
         {{"generation", r.prompts.generation},
          {"comparison", r.prompts.comparison},
          {"verification", r.prompts.verification},
          {"refinement", r.prompts.refinement},
          {"judge", r.prompts.judge},
          {"audit", r.prompts.audit},
          {"cot_suffix", r.prompts.cot_suffix}}},
        {"curation",
         {{"alpha", s.curation.alpha},
          {"beta", s.curation.beta},
          {"gamma", s.curation.gamma},
          {"judge_coeff", s.curation.judge_coeff},
          {"models", models},
          {"direction", s.curation.direction}}},
    };
}

Settings settings_from_json(const json& given) {
    const json schema = default_config_json();
    check_known_keys(schema, given, "");
    json j = schema;
    j.merge_patch(given);

    Settings s;
    try {
        s.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key 'seed': ") + e.what());
    }
    auto& r = s.run;
    r.t_max = get<int>(j, "loop", "t_max");
    r.strategy = parse_strategy(get<std::string>(j, "loop", "strategy"));
    r.n_samples = get<int>(j, "loop", "n_samples");
    r.ablate_al_fv = get<bool>(j, "loop", "ablate_al_fv");
    r.parallel_workers = get<int>(j, "loop", "parallel_workers");

    r.percentile = get<double>(j, "localization", "percentile");
    r.dilation_kernel = get<int>(j, "localization", "dilation_kernel");
    const auto& lr = j["localization"]["layer_range"];
    if (!lr.is_null()) {
        if (!lr.is_array() || lr.size() != 2) throw ConfigError("localization.layer_range must be [start, end] or null");
        r.layer_range = LayerRange{lr[0].get<int>(), lr[1].get<int>()};
    }
    r.layer_policy = parse_policy(get<std::string>(j, "localization", "layer_policy"));
    r.cross_attention_layer = get<int>(j, "localization", "cross_attention_layer");
    r.emit_overlays = get<bool>(j, "localization", "overlays");

    r.backend_endpoint = get<std::string>(j, "backend", "endpoint");
    s.backend.judge_endpoint = get<std::string>(j, "backend", "judge_endpoint");
    s.backend.max_attempts = get<int>(j, "backend", "max_attempts");
    s.backend.backoff_ms = get<int>(j, "backend", "backoff_ms");
    s.backend.request_timeout_s = get<double>(j, "backend", "request_timeout_s");
    s.backend.max_in_flight = get<int>(j, "backend", "max_in_flight");

    s.render.engine = get<std::string>(j, "render", "engine");
    s.render.dpi = get<int>(j, "render", "dpi");
    s.render.timeout_s = get<double>(j, "render", "timeout_s");
    s.render.max_concurrent = get<int>(j, "render", "max_concurrent");
    s.render.latex_bin = get<std::string>(j, "render", "latex_bin");
    s.render.raster_bin = get<std::string>(j, "render", "raster_bin");
    s.render.cache_dir = get<std::string>(j, "render", "cache_dir");
    s.render.mathtext_script = get<std::string>(j, "render", "mathtext_script");
    s.render.python_bin = get<std::string>(j, "render", "python_bin");

    r.prompts.generation = get<std::string>(j, "prompts", "generation");
    r.prompts.comparison = get<std::string>(j, "prompts", "comparison");
    r.prompts.verification = get<std::string>(j, "prompts", "verification");
    r.prompts.refinement = get<std::string>(j, "prompts", "refinement");
    r.prompts.judge = get<std::string>(j, "prompts", "judge");
    r.prompts.audit = get<std::string>(j, "prompts", "audit");
    r.prompts.cot_suffix = get<std::string>(j, "prompts", "cot_suffix");

    s.curation.alpha = get<double>(j, "curation", "alpha");
    s.curation.beta = get<double>(j, "curation", "beta");
    s.curation.gamma = get<double>(j, "curation", "gamma");
    s.curation.judge_coeff = get<double>(j, "curation", "judge_coeff");
    s.curation.direction = get<std::string>(j, "curation", "direction");
    s.curation.model_weights.clear();
    for (const auto& m : j["curation"]["models"]) {
        if (!m.contains("name") || !m.contains("weight")) {
            throw ConfigError("curation.models entries need \"name\" and \"weight\"");
        }
        s.curation.model_weights.emplace_back(m["name"].get<std::string>(), m["weight"].get<double>());
    }

    if (s.backend.max_attempts < 1) throw ConfigError("backend.max_attempts must be >= 1");
    if (s.render.dpi < 1) throw ConfigError("render.dpi must be >= 1");
    if (s.render.max_concurrent < 1) throw ConfigError("render.max_concurrent must be >= 1");
    if (s.curation.direction != "asc" && s.curation.direction != "desc") {
        throw ConfigError("curation.direction must be 'asc' or 'desc'");
    }
    r.validate();
    return s;
}

void apply_override(json& tree, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const auto key = assignment.substr(0, eq);
    const auto raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* node = &tree;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override key '" + key + "' has an empty segment");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
        node = &(*node)[part];
        start = dot + 1;
    }
}

Settings load_settings(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
    json tree = json::object();
    if (const char* v = env("A2R2_BACKEND_URL")) tree["backend"]["endpoint"] = v;
    if (const char* v = env("A2R2_LATEX_BIN")) tree["render"]["latex_bin"] = v;
    if (const char* v = env("A2R2_RASTER_BIN")) tree["render"]["raster_bin"] = v;
    if (const char* v = env("A2R2_CACHE_DIR")) tree["render"]["cache_dir"] = v;
    if (const char* v = env("A2R2_MATHTEXT_SCRIPT")) tree["render"]["mathtext_script"] = v;

    if (file) {
        std::ifstream in(*file);
        if (!in) throw ConfigError("cannot open config file " + file->string());
        try {
            tree.merge_patch(json::parse(in));
        } catch (const json::parse_error& e) {
            throw ConfigError("config file " + file->string() + ": " + e.what());
        }
    }
    for (const auto& o : overrides) apply_override(tree, o);
    return settings_from_json(tree);
}

}  // namespace a2r2
