#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "a2r2/attnloc.hpp"
#include "a2r2/config.hpp"
#include "a2r2/dataset.hpp"
#include "a2r2/diff.hpp"
#include "a2r2/image.hpp"
#include "a2r2/latex.hpp"
#include "a2r2/prompts.hpp"

namespace a2r2::backend {

enum class Role { generation, comparison, verification, refinement, judge, attention };

std::string to_string(Role r);
Role parse_role(const std::string& s);

struct BackendRequest {
    Role role = Role::generation;
    std::string prompt;
    std::vector<std::vector<std::uint8_t>> images;  // PNG payloads
    // Named text inputs: "latex", "diff" (and "tokens" for attention requests).
    std::map<std::string, std::string> text_context;
    bool want_attention = false;
    std::optional<LayerRange> layer_range;
    int sample_index = 0;  // distinguishes Best-of-N draws; not sent on the wire

    // Throws std::invalid_argument unless the role's arity is met.
    void validate() const;
};

struct AttentionPayload {
    std::vector<int> dims;  // n_tokens, n_layers, n_heads, grid_h, grid_w
    std::vector<float> data;
    std::vector<std::string> tokens;
    std::vector<int> layers;  // absolute layer indices; empty means 0..n_layers-1

    // Throws ProtocolError when data does not match dims.
    attnloc::AttentionStack to_stack() const;
};

struct BackendResponse {
    std::string text;
    std::optional<AttentionPayload> attention;
    // Scripted backend only: 1-based item numbers in `text` that were fabricated.
    std::optional<std::vector<int>> fabricated_items;
};

struct Capabilities {
    bool attention = false;
    int layers = 0;
};

/// One conversation partner. Implementations must be safe to call from one
/// thread at a time; the client serializes access.
class Transport {
public:
    virtual ~Transport() = default;
    virtual Capabilities capabilities() = 0;
    virtual BackendResponse infer(const BackendRequest& request) = 0;
};

/// Produces a transport per instance. Scripted endpoints need the instance's
/// ground truth; HTTP endpoints ignore it.
class Endpoint {
public:
    virtual ~Endpoint() = default;
    virtual std::unique_ptr<Transport> connect(const Instance& instance) = 0;
    virtual std::string describe() const = 0;
    virtual bool scripted() const { return false; }
};

// "mock:?seed=..&errors=..", "http://host:port" or "https://...".
// `run_seed` is mixed into scripted randomness so `--seed` changes every draw.
std::unique_ptr<Endpoint> make_endpoint(const std::string& uri, const BackendSettings& settings,
                                        std::uint64_t run_seed);

/// Parameters of the scripted backend (the "mock:" scheme).
struct ScriptedParams {
    std::uint64_t seed = 0;
    std::vector<int> errors = {0};  // injected substitutions per generation call, cycled
    int fix_per_round = 1;
    double halluc_rate = 0.0;       // probability of one fabricated item per comparison
    int max_reported = 0;           // cap on genuine items per comparison; 0 = all
    bool attention = true;
    int layers = 40;
    int heads = 4;
    int patch = 16;                 // attention grid cell size in pixels

    static ScriptedParams from_query(const std::string& query);
};

std::unique_ptr<Transport> make_scripted_transport(const Instance& instance, const ScriptedParams& params,
                                                   std::uint64_t run_seed);

struct HttpOptions {
    double timeout_s = 120.0;
};
std::unique_ptr<Transport> make_http_transport(const std::string& base_url, const HttpOptions& options);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

nlohmann::json request_to_json(const BackendRequest& request);
BackendRequest request_from_json(const nlohmann::json& j);
nlohmann::json response_to_json(const BackendResponse& response);
BackendResponse response_from_json(const nlohmann::json& j);

// First number in the text, clamped to [0, 10]. Throws JudgeParseError when none.
double parse_judge_score(const std::string& text, bool* clamped = nullptr);

// REAL -> false, HALLUCINATED -> true. Throws JudgeParseError otherwise.
bool parse_audit_verdict(const std::string& text);

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds backoff{250};
    // Replaceable for tests; defaults to std::this_thread::sleep_for.
    std::function<void(std::chrono::milliseconds)> sleep;
};

struct RefineOutcome {
    LatexDoc latex;
    bool no_progress = false;  // output identical to the input hypothesis
};

/// Role-specific calls over a transport: prompt filling, retries, response
/// parsing, and a transcript of every exchange.
class VisionClient {
public:
    VisionClient(std::unique_ptr<Transport> transport, PromptTemplates prompts, RetryPolicy retry = {});

    Capabilities capabilities();

    LatexDoc generate(const RasterImage& image, const std::string& prompt_suffix = {}, int sample_index = 0);
    DiffReport compare(const RasterImage& input, const RasterImage& rendered);
    DiffReport verify(const DiffReport& diff, const RasterImage& region_a, const RasterImage& region_b);
    RefineOutcome refine(const LatexDoc& latex, const RasterImage& region_a, const RasterImage& region_b,
                         const DiffReport& verified);
    attnloc::AttentionStack fetch_attention(const RasterImage& image, const std::string& token_text,
                                            const LayerRange& layers);
    double judge_similarity(const RasterImage& reference, const RasterImage& candidate);
    // Judge verdict on one recorded diff item: true when it is fabricated.
    bool audit_item(const RasterImage& input, const RasterImage& rendered, const std::string& item);

    // One JSON object per exchange, in call order.
    std::vector<nlohmann::json> transcript() const;

private:
    BackendResponse call(BackendRequest request);

    std::unique_ptr<Transport> transport_;
    PromptTemplates prompts_;
    RetryPolicy retry_;
    std::optional<Capabilities> caps_;
    mutable std::mutex mutex_;
    std::vector<nlohmann::json> transcript_;
};

}  // namespace a2r2::backend
