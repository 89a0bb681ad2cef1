#include "a2r2/backend.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cstring>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <spdlog/spdlog.h>

#include "a2r2/error.hpp"
#include "a2r2/render.hpp"
#include "backend_impl.hpp"

namespace a2r2::backend {

using nlohmann::json;

namespace {

constexpr const char* kRoleNames[] = {"generation", "comparison", "verification", "refinement", "judge", "attention"};

}  // namespace

std::string to_string(Role r) { return kRoleNames[static_cast<int>(r)]; }

Role parse_role(const std::string& s) {
    for (int i = 0; i < 6; ++i) {
        if (s == kRoleNames[i]) return static_cast<Role>(i);
    }
    throw ProtocolError("unknown role '" + s + "'");
}

void BackendRequest::validate() const {
    auto need = [&](std::size_t n_images, std::initializer_list<const char*> keys) {
        if (images.size() != n_images) {
            throw std::invalid_argument(to_string(role) + " request needs " + std::to_string(n_images) +
                                        " image(s), got " + std::to_string(images.size()));
        }
        for (const char* k : keys) {
            if (!text_context.count(k)) throw std::invalid_argument(to_string(role) + " request needs '" + k + "'");
        }
    };
    switch (role) {
        case Role::generation: need(1, {}); break;
        case Role::comparison: need(2, {}); break;
        case Role::verification: need(2, {"diff"}); break;
        case Role::refinement: need(2, {"latex", "diff"}); break;
        case Role::judge: need(2, {}); break;
        case Role::attention:
            need(1, {"tokens"});
            if (!layer_range || layer_range->start > layer_range->end || layer_range->start < 0) {
                throw std::invalid_argument("attention request needs a valid layer range");
            }
            break;
    }
}

attnloc::AttentionStack AttentionPayload::to_stack() const {
    if (dims.size() != 5) throw ProtocolError("attention dims must have 5 entries");
    std::size_t expected = 1;
    for (int d : dims) {
        if (d <= 0) throw ProtocolError("attention dims must be positive");
        expected *= static_cast<std::size_t>(d);
    }
    if (data.size() != expected) {
        throw ProtocolError("attention data has " + std::to_string(data.size()) + " values, dims imply " +
                            std::to_string(expected));
    }
    std::vector<int> ls = layers;
    if (ls.empty()) {
        for (int i = 0; i < dims[1]; ++i) ls.push_back(i);
    } else if (static_cast<int>(ls.size()) != dims[1]) {
        throw ProtocolError("attention layer list does not match dims");
    }
    try {
        return attnloc::AttentionStack(dims[0], std::move(ls), dims[2], dims[3], dims[4], data);
    } catch (const std::invalid_argument& e) {
        throw ProtocolError(std::string("invalid attention payload: ") + e.what());
    }
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    std::string clean;
    clean.reserve(text.size());
    for (char c : text) {
        if (!std::isspace(static_cast<unsigned char>(c))) clean += c;
    }
    if (clean.size() % 4 != 0) throw ProtocolError("base64 length is not a multiple of 4");
    std::vector<std::uint8_t> out(clean.size() / 4 * 3);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                  static_cast<int>(clean.size()));
    if (n < 0) throw ProtocolError("invalid base64 payload");
    std::size_t pad = 0;
    if (!clean.empty() && clean.back() == '=') ++pad;
    if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

json request_to_json(const BackendRequest& r) {
    json j{{"role", to_string(r.role)}, {"prompt", r.prompt}, {"want_attention", r.want_attention}};
    j["images"] = json::array();
    for (const auto& img : r.images) j["images"].push_back(base64_encode(img));
    j["text_context"] = json::object();
    for (const auto& [k, v] : r.text_context) j["text_context"][k] = v;
    j["layer_range"] = r.layer_range ? json::array({r.layer_range->start, r.layer_range->end}) : json(nullptr);
    return j;
}

BackendRequest request_from_json(const json& j) {
    try {
        BackendRequest r;
        r.role = parse_role(j.at("role").get<std::string>());
        r.prompt = j.value("prompt", "");
        for (const auto& img : j.value("images", json::array())) r.images.push_back(base64_decode(img.get<std::string>()));
        if (j.contains("text_context") && j["text_context"].is_object()) {
            for (const auto& [k, v] : j["text_context"].items()) r.text_context[k] = v.get<std::string>();
        }
        r.want_attention = j.value("want_attention", false);
        if (j.contains("layer_range") && j["layer_range"].is_array()) {
            r.layer_range = LayerRange{j["layer_range"].at(0).get<int>(), j["layer_range"].at(1).get<int>()};
        }
        return r;
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed request: ") + e.what());
    }
}

json response_to_json(const BackendResponse& r) {
    json j{{"text", r.text}};
    if (r.attention) {
        const auto& a = *r.attention;
        std::vector<std::uint8_t> raw(a.data.size() * 4);
        for (std::size_t i = 0; i < a.data.size(); ++i) {
            std::uint32_t bits;
            std::memcpy(&bits, &a.data[i], 4);
            for (int b = 0; b < 4; ++b) raw[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
        }
        j["attention"] = {{"dims", a.dims}, {"data", base64_encode(raw)}, {"tokens", a.tokens}};
        if (!a.layers.empty()) j["attention"]["layers"] = a.layers;
    }
    return j;
}

BackendResponse response_from_json(const json& j) {
    try {
        BackendResponse r;
        r.text = j.at("text").get<std::string>();
        if (j.contains("attention") && !j["attention"].is_null()) {
            const auto& a = j["attention"];
            AttentionPayload p;
            p.dims = a.at("dims").get<std::vector<int>>();
            const auto raw = base64_decode(a.at("data").get<std::string>());
            if (raw.size() % 4 != 0) throw ProtocolError("attention data is not a whole number of float32 values");
            p.data.resize(raw.size() / 4);
            for (std::size_t i = 0; i < p.data.size(); ++i) {
                std::uint32_t bits = 0;
                for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(raw[i * 4 + b]) << (8 * b);
                std::memcpy(&p.data[i], &bits, 4);
            }
            p.tokens = a.value("tokens", std::vector<std::string>{});
            p.layers = a.value("layers", std::vector<int>{});
            p.to_stack();  // validates dims against data
            r.attention = std::move(p);
        }
        return r;
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed response: ") + e.what());
    }
}

double parse_judge_score(const std::string& text, bool* clamped) {
    static const std::regex number(R"([-+]?\d+(?:\.\d+)?)");
    std::smatch m;
    if (!std::regex_search(text, m, number)) throw JudgeParseError("no score in judge response: " + text);
    const double v = std::stod(m.str());
    const double c = std::clamp(v, 0.0, 10.0);
    if (clamped) *clamped = (c != v);
    return c;
}

bool parse_audit_verdict(const std::string& text) {
    std::string upper;
    for (char c : text) upper += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    const bool fabricated = upper.find("HALLUCINATED") != std::string::npos;
    const bool real = upper.find("REAL") != std::string::npos;
    if (fabricated == real) throw JudgeParseError("no verdict in audit response: " + text);
    return fabricated;
}

// ---------------------------------------------------------------------------

VisionClient::VisionClient(std::unique_ptr<Transport> transport, PromptTemplates prompts, RetryPolicy retry)
    : transport_(std::move(transport)), prompts_(std::move(prompts)), retry_(std::move(retry)) {
    if (!transport_) throw std::invalid_argument("VisionClient needs a transport");
    if (retry_.max_attempts < 1) retry_.max_attempts = 1;
    if (!retry_.sleep) retry_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

Capabilities VisionClient::capabilities() {
    std::lock_guard lock(mutex_);
    if (!caps_) caps_ = transport_->capabilities();
    return *caps_;
}

BackendResponse VisionClient::call(BackendRequest request) {
    request.validate();
    std::lock_guard lock(mutex_);
    BackendResponse response;
    for (int attempt = 1;; ++attempt) {
        try {
            response = transport_->infer(request);
            break;
        } catch (const TransportError& e) {
            if (attempt >= retry_.max_attempts) {
                throw BackendUnavailable(to_string(request.role) + " request failed after " +
                                         std::to_string(attempt) + " attempt(s): " + e.what());
            }
            spdlog::warn("{} request failed ({}), retrying", to_string(request.role), e.what());
            retry_.sleep(retry_.backoff * (1 << (attempt - 1)));
        }
    }

    json entry{{"seq", transcript_.size()}, {"role", to_string(request.role)}, {"prompt", request.prompt}};
    entry["images"] = json::array();
    for (const auto& img : request.images) {
        entry["images"].push_back(
            render::sha256_hex(std::string_view(reinterpret_cast<const char*>(img.data()), img.size())).substr(0, 16));
    }
    if (!request.text_context.empty()) entry["context"] = request.text_context;
    if (request.role == Role::generation) entry["sample"] = request.sample_index;
    if (request.layer_range) entry["layers"] = {request.layer_range->start, request.layer_range->end};
    entry["response"] = response.text;
    if (response.attention) entry["attention_dims"] = response.attention->dims;
    if (response.fabricated_items) entry["fabricated"] = *response.fabricated_items;
    transcript_.push_back(std::move(entry));
    return response;
}

namespace {

constexpr const char* kImage1 = "<image 1>";
constexpr const char* kImage2 = "<image 2>";

}  // namespace

LatexDoc VisionClient::generate(const RasterImage& image, const std::string& prompt_suffix, int sample_index) {
    BackendRequest r;
    r.role = Role::generation;
    r.prompt = fill_template(prompts_.generation, {{"image", kImage1}});
    if (!prompt_suffix.empty()) r.prompt += " " + prompt_suffix;
    r.images.push_back(encode_png(image));
    r.sample_index = sample_index;
    const auto resp = call(std::move(r));
    LatexDoc doc(strip_model_markup(resp.text));
    if (doc.empty()) throw EmptyGeneration("generation returned no LaTeX");
    return doc;
}

DiffReport VisionClient::compare(const RasterImage& input, const RasterImage& rendered) {
    BackendRequest r;
    r.role = Role::comparison;
    r.prompt = fill_template(prompts_.comparison, {{"image_a", kImage1}, {"image_b", kImage2}});
    r.images = {encode_png(input), encode_png(rendered)};
    const auto resp = call(std::move(r));
    DiffReport d = parse_diff(resp.text);
    if (resp.fabricated_items) {
        for (auto& item : d.items) {
            item.fabricated = std::find(resp.fabricated_items->begin(), resp.fabricated_items->end(), item.index) !=
                              resp.fabricated_items->end();
        }
    }
    return d;
}

DiffReport VisionClient::verify(const DiffReport& diff, const RasterImage& region_a, const RasterImage& region_b) {
    if (diff.empty()) throw std::invalid_argument("verify needs a non-empty diff");
    BackendRequest r;
    r.role = Role::verification;
    const auto numbered = diff.numbered();
    r.prompt = fill_template(prompts_.verification, {{"image_a", kImage1}, {"image_b", kImage2}, {"diff", numbered}});
    r.images = {encode_png(region_a), encode_png(region_b)};
    r.text_context["diff"] = numbered;
    const auto resp = call(std::move(r));
    return parse_verified(diff, resp.text);
}

RefineOutcome VisionClient::refine(const LatexDoc& latex, const RasterImage& region_a, const RasterImage& region_b,
                                   const DiffReport& verified) {
    if (verified.empty()) throw std::invalid_argument("refine needs a non-empty diff");
    BackendRequest r;
    r.role = Role::refinement;
    const auto numbered = verified.numbered();
    r.prompt = fill_template(prompts_.refinement, {{"image_a", kImage1},
                                                   {"image_b", kImage2},
                                                   {"latex", latex.source()},
                                                   {"diff", numbered}});
    r.images = {encode_png(region_a), encode_png(region_b)};
    r.text_context["latex"] = latex.source();
    r.text_context["diff"] = numbered;
    const auto resp = call(std::move(r));
    LatexDoc out(strip_model_markup(resp.text));
    if (out.empty()) throw EmptyGeneration("refinement returned no LaTeX");
    const bool same = out.tokens() == latex.tokens();
    return {same ? latex : std::move(out), same};
}

attnloc::AttentionStack VisionClient::fetch_attention(const RasterImage& image, const std::string& token_text,
                                                      const LayerRange& layers) {
    const auto caps = capabilities();
    if (!caps.attention) throw AttentionUnavailable("backend does not expose attention");
    if (caps.layers > 0 && layers.end >= caps.layers) {
        throw ProtocolError("layer range [" + std::to_string(layers.start) + ", " + std::to_string(layers.end) +
                            "] exceeds the backend's " + std::to_string(caps.layers) + " layers");
    }
    BackendRequest r;
    r.role = Role::attention;
    r.prompt = token_text;
    r.images.push_back(encode_png(image));
    r.text_context["tokens"] = token_text;
    r.want_attention = true;
    r.layer_range = layers;
    const auto resp = call(std::move(r));
    if (!resp.attention) throw ProtocolError("attention response carries no attention payload");
    AttentionPayload payload = *resp.attention;
    if (payload.layers.empty() && payload.dims.size() == 5 && payload.dims[1] == layers.count()) {
        for (int l = layers.start; l <= layers.end; ++l) payload.layers.push_back(l);
    }
    auto stack = payload.to_stack();
    if (stack.n_layers() != layers.count()) {
        throw ProtocolError("requested " + std::to_string(layers.count()) + " layers, got " +
                            std::to_string(stack.n_layers()));
    }
    return stack;
}

double VisionClient::judge_similarity(const RasterImage& reference, const RasterImage& candidate) {
    BackendRequest r;
    r.role = Role::judge;
    r.prompt = fill_template(prompts_.judge, {{"image_a", kImage1}, {"image_b", kImage2}});
    r.images = {encode_png(reference), encode_png(candidate)};
    const auto resp = call(std::move(r));
    bool clamped = false;
    const double score = parse_judge_score(resp.text, &clamped);
    if (clamped) spdlog::warn("judge score '{}' outside [0, 10], clamped to {}", resp.text, score);
    return score;
}

bool VisionClient::audit_item(const RasterImage& input, const RasterImage& rendered, const std::string& item) {
    BackendRequest r;
    r.role = Role::judge;
    r.prompt = fill_template(prompts_.audit, {{"image_a", kImage1}, {"image_b", kImage2}, {"diff", item}});
    r.images = {encode_png(input), encode_png(rendered)};
    r.text_context["diff"] = item;
    return parse_audit_verdict(call(std::move(r)).text);
}

std::vector<json> VisionClient::transcript() const {
    std::lock_guard lock(mutex_);
    return transcript_;
}

// ---------------------------------------------------------------------------

namespace {

class ScriptedEndpoint : public Endpoint {
public:
    ScriptedEndpoint(ScriptedParams params, std::uint64_t run_seed, std::string uri)
        : params_(std::move(params)), run_seed_(run_seed), uri_(std::move(uri)) {}
    std::unique_ptr<Transport> connect(const Instance& instance) override {
        return make_scripted_transport(instance, params_, run_seed_);
    }
    std::string describe() const override { return uri_; }
    bool scripted() const override { return true; }

private:
    ScriptedParams params_;
    std::uint64_t run_seed_;
    std::string uri_;
};

}  // namespace

std::unique_ptr<Endpoint> make_endpoint(const std::string& uri, const BackendSettings& settings,
                                        std::uint64_t run_seed) {
    if (uri.rfind("mock:", 0) == 0) {
        const auto q = uri.find('?');
        const auto params = ScriptedParams::from_query(q == std::string::npos ? "" : uri.substr(q + 1));
        return std::make_unique<ScriptedEndpoint>(params, run_seed, uri);
    }
    if (uri.rfind("http://", 0) == 0 || uri.rfind("https://", 0) == 0) {
        return detail::make_http_endpoint(uri, settings);
    }
    throw ConfigError("unsupported backend endpoint '" + uri + "' (expected mock:... or http(s)://...)");
}

}  // namespace a2r2::backend
