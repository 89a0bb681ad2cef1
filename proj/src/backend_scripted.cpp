// Deterministic stand-in for a vision-language model. It knows the ground
// truth of its instance and tracks the hypothesis it last emitted as a token
// vector aligned with the ground truth, so every call can be answered exactly.

#include <algorithm>
#include <cmath>
#include <random>
#include <regex>
#include <sstream>

#include "a2r2/backend.hpp"
#include "a2r2/error.hpp"
#include "a2r2/metrics.hpp"

namespace a2r2::backend {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

bool is_letter(const std::string& t) { return t.size() == 1 && std::isalpha(static_cast<unsigned char>(t[0])); }

bool is_number(const std::string& t) {
    return !t.empty() && std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

std::string corrupt(const std::string& t) {
    std::string out = t;
    char& c = out.back();
    if (std::isdigit(static_cast<unsigned char>(c))) {
        c = static_cast<char>('0' + (c - '0' + 1) % 10);
    } else if (c >= 'a' && c <= 'z') {
        c = c == 'z' ? 'a' : static_cast<char>(c + 1);
    } else if (c >= 'A' && c <= 'Z') {
        c = c == 'Z' ? 'A' : static_cast<char>(c + 1);
    }
    return out;
}

struct Claim {
    int position;  // 0-based token position
    std::string original;
    std::string rendered;
};

std::string describe(const Claim& c) {
    return "token " + std::to_string(c.position + 1) + ": the original shows `" + c.original +
           "` but the rendering shows `" + c.rendered + "`";
}

std::optional<Claim> parse_claim(const std::string& text) {
    static const std::regex re(R"(token (\d+): the original shows `([^`]*)` but the rendering shows `([^`]*)`)");
    std::smatch m;
    if (!std::regex_search(text, m, re)) return std::nullopt;
    return Claim{std::stoi(m[1].str()) - 1, m[2].str(), m[3].str()};
}

std::vector<int> parse_int_list(const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(std::stoi(part));
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

class ScriptedTransport : public Transport {
public:
    ScriptedTransport(const Instance& instance, const ScriptedParams& params, std::uint64_t run_seed)
        : params_(params) {
        if (!instance.ground_truth) {
            throw ConfigError("scripted backend needs ground-truth LaTeX for instance '" + instance.id + "'");
        }
        truth_source_ = instance.ground_truth->source();
        spans_ = tokenize_latex_spans(truth_source_);
        for (const auto& s : spans_) truth_.push_back(s.text);
        current_ = truth_;
        find_substitutable();
        rng_.seed(splitmix64(params.seed ^ splitmix64(run_seed ^ fnv1a(instance.id))));
    }

    Capabilities capabilities() override { return {params_.attention, params_.layers}; }

    BackendResponse infer(const BackendRequest& request) override {
        switch (request.role) {
            case Role::generation: return generate(request);
            case Role::comparison: return compare(request);
            case Role::verification: return verify(request);
            case Role::refinement: return refine(request);
            case Role::judge: return judge(request);
            case Role::attention: return attention(request);
        }
        throw ProtocolError("unhandled role");
    }

private:
    // Letters and numbers outside environment names can be swapped without
    // breaking compilation.
    void find_substitutable() {
        int env_depth = 0;
        for (std::size_t k = 0; k < truth_.size(); ++k) {
            const auto& t = truth_[k];
            if (env_depth > 0) {
                if (t == "}") --env_depth;
                continue;
            }
            if ((t == "\\begin" || t == "\\end") && k + 1 < truth_.size() && truth_[k + 1] == "{") {
                env_depth = 1;
                ++k;
                continue;
            }
            if (is_letter(t) || is_number(t)) substitutable_.push_back(static_cast<int>(k));
        }
    }

    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }

    std::string source_of(const std::vector<std::string>& tokens) const {
        std::string out = truth_source_;
        for (std::size_t k = spans_.size(); k-- > 0;) {
            if (tokens[k] != truth_[k]) out.replace(spans_[k].offset, spans_[k].text.size(), tokens[k]);
        }
        return out;
    }

    std::vector<int> live_errors() const {
        std::vector<int> out;
        for (std::size_t k = 0; k < truth_.size(); ++k) {
            if (current_[k] != truth_[k]) out.push_back(static_cast<int>(k));
        }
        return out;
    }

    bool genuine(const Claim& c) const {
        return c.position >= 0 && c.position < static_cast<int>(truth_.size()) && truth_[c.position] == c.original &&
               current_[c.position] == c.rendered && c.original != c.rendered;
    }

    BackendResponse generate(const BackendRequest& request) {
        const int wanted = params_.errors[generations_++ % params_.errors.size()];
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(wanted, 0)), substitutable_.size());
        std::vector<int> pool = substitutable_;
        current_ = truth_;
        for (std::size_t i = 0; i < n; ++i) {
            std::swap(pool[i], pool[i + index(pool.size() - i)]);
            current_[pool[i]] = corrupt(truth_[pool[i]]);
        }
        const std::string latex = source_of(current_);
        if (request.prompt.find("step by step") != std::string::npos) {
            return {"First I read the layout of the formula, then each symbol from left to right.\n"
                    "Final answer:\n```latex\n" + latex + "\n```",
                    std::nullopt, std::nullopt};
        }
        return {latex, std::nullopt, std::nullopt};
    }

    BackendResponse compare(const BackendRequest& request) {
        last_input_ = decode_png(request.images[0]);
        last_rendered_ = decode_png(request.images[1]);

        std::vector<std::pair<Claim, bool>> claims;  // claim, fabricated
        auto live = live_errors();
        if (params_.max_reported > 0 && static_cast<int>(live.size()) > params_.max_reported) {
            live.resize(static_cast<std::size_t>(params_.max_reported));
        }
        for (int k : live) claims.push_back({{k, truth_[k], current_[k]}, false});

        if (uniform() < params_.halluc_rate) {
            std::vector<int> correct;
            for (int k : substitutable_) {
                if (current_[k] == truth_[k]) correct.push_back(k);
            }
            if (!correct.empty()) {
                const int k = correct[index(correct.size())];
                claims.push_back({{k, corrupt(truth_[k]), truth_[k]}, true});
            }
        }
        std::sort(claims.begin(), claims.end(),
                  [](const auto& a, const auto& b) { return a.first.position < b.first.position; });

        BackendResponse resp;
        resp.fabricated_items.emplace();
        if (claims.empty()) {
            resp.text = std::string(kNoDifferences);
            return resp;
        }
        for (std::size_t i = 0; i < claims.size(); ++i) {
            if (i) resp.text += '\n';
            resp.text += std::to_string(i + 1) + ". " + describe(claims[i].first);
            if (claims[i].second) resp.fabricated_items->push_back(static_cast<int>(i) + 1);
        }
        return resp;
    }

    BackendResponse verify(const BackendRequest& request) {
        const auto diff = parse_diff(request.text_context.at("diff"));
        std::string out;
        for (const auto& item : diff.items) {
            const auto claim = parse_claim(item.description);
            if (claim && !genuine(*claim)) continue;
            if (!out.empty()) out += '\n';
            out += std::to_string(item.index) + ". " + item.description;
        }
        return {out.empty() ? std::string(kNoDifferences) : out, std::nullopt, std::nullopt};
    }

    BackendResponse refine(const BackendRequest& request) {
        const auto& latex = request.text_context.at("latex");
        auto tokens = tokenize_latex(latex);
        if (tokens.size() != truth_.size()) return {latex, std::nullopt, std::nullopt};
        const auto diff = parse_diff(request.text_context.at("diff"));
        int applied = 0;
        for (const auto& item : diff.items) {
            if (applied >= params_.fix_per_round) break;
            const auto claim = parse_claim(item.description);
            if (!claim || claim->position < 0 || claim->position >= static_cast<int>(tokens.size())) continue;
            if (claim->original.empty()) continue;
            tokens[claim->position] = claim->original;
            ++applied;
        }
        current_ = tokens;
        return {source_of(current_), std::nullopt, std::nullopt};
    }

    BackendResponse judge(const BackendRequest& request) {
        if (const auto it = request.text_context.find("diff"); it != request.text_context.end()) {
            const auto claim = parse_claim(it->second);
            return {claim && !genuine(*claim) ? "HALLUCINATED" : "REAL", std::nullopt, std::nullopt};
        }
        const auto pm = metrics::pixel_match(decode_png(request.images[0]), decode_png(request.images[1]));
        std::ostringstream out;
        out << std::round(pm) / 10.0;
        return {out.str(), std::nullopt, std::nullopt};
    }

    // Per-cell attention follows where the input and the last compared render
    // disagree, with mild multiplicative noise per token, layer and head.
    BackendResponse attention(const BackendRequest& request) {
        const RasterImage image = decode_png(request.images[0]);
        const auto& range = *request.layer_range;
        if (range.end >= params_.layers) throw ProtocolError("layer range exceeds scripted model depth");
        const int patch = std::max(params_.patch, 1);
        const int gh = std::clamp((image.height() + patch - 1) / patch, 1, 32);
        const int gw = std::clamp((image.width() + patch - 1) / patch, 1, 32);
        const double cell_h = static_cast<double>(image.height()) / gh;
        const double cell_w = static_cast<double>(image.width()) / gw;

        std::vector<double> base(static_cast<std::size_t>(gh) * gw, 1.0);
        if (last_input_ && last_rendered_ && *last_input_ == image) {
            const auto [a, b] = metrics::canvas_pair(image, *last_rendered_);
            std::vector<double> differing(base.size(), 0.0), total(base.size(), 0.0);
            for (int r = 0; r < image.height(); ++r) {
                for (int c = 0; c < image.width(); ++c) {
                    const auto cell = static_cast<std::size_t>(std::min(gh - 1, static_cast<int>(r / cell_h))) * gw +
                                      std::min(gw - 1, static_cast<int>(c / cell_w));
                    total[cell] += 1.0;
                    if ((a.at(r, c) >= 128) != (b.at(r, c) >= 128)) differing[cell] += 1.0;
                }
            }
            for (std::size_t i = 0; i < base.size(); ++i) base[i] = 0.05 + differing[i] / std::max(total[i], 1.0);
        }

        AttentionPayload p;
        std::istringstream words(request.text_context.at("tokens"));
        for (std::string w; words >> w;) p.tokens.push_back(w);
        if (p.tokens.empty()) p.tokens.push_back("");
        const int n_tokens = static_cast<int>(p.tokens.size());
        p.dims = {n_tokens, range.count(), params_.heads, gh, gw};
        for (int l = range.start; l <= range.end; ++l) p.layers.push_back(l);
        p.data.reserve(static_cast<std::size_t>(n_tokens) * range.count() * params_.heads * base.size());
        for (int t = 0; t < n_tokens; ++t) {
            for (int l = 0; l < range.count(); ++l) {
                for (int h = 0; h < params_.heads; ++h) {
                    for (double v : base) p.data.push_back(static_cast<float>(v * (0.75 + 0.5 * uniform())));
                }
            }
        }
        return {"", std::move(p), std::nullopt};
    }

    ScriptedParams params_;
    std::string truth_source_;
    std::vector<TokenSpan> spans_;
    std::vector<std::string> truth_;
    std::vector<std::string> current_;
    std::vector<int> substitutable_;
    std::mt19937_64 rng_;
    std::size_t generations_ = 0;
    std::optional<RasterImage> last_input_;
    std::optional<RasterImage> last_rendered_;
};

}  // namespace

ScriptedParams ScriptedParams::from_query(const std::string& query) {
    ScriptedParams p;
    std::stringstream ss(query);
    std::string pair;
    while (std::getline(ss, pair, '&')) {
        if (pair.empty()) continue;
        const auto eq = pair.find('=');
        const std::string key = pair.substr(0, eq);
        const std::string value = eq == std::string::npos ? "" : pair.substr(eq + 1);
        try {
            if (key == "seed") p.seed = std::stoull(value);
            else if (key == "errors") p.errors = parse_int_list(value);
            else if (key == "fix_per_round") p.fix_per_round = std::stoi(value);
            else if (key == "halluc_rate") p.halluc_rate = std::stod(value);
            else if (key == "max_reported") p.max_reported = std::stoi(value);
            else if (key == "attention") p.attention = value != "0" && value != "false";
            else if (key == "layers") p.layers = std::stoi(value);
            else if (key == "heads") p.heads = std::stoi(value);
            else if (key == "patch") p.patch = std::stoi(value);
            else throw ConfigError("unknown mock parameter '" + key + "'");
        } catch (const std::logic_error&) {
            throw ConfigError("invalid value for mock parameter '" + key + "': '" + value + "'");
        }
    }
    if (p.fix_per_round < 1) throw ConfigError("mock fix_per_round must be >= 1");
    if (p.halluc_rate < 0.0 || p.halluc_rate > 1.0) throw ConfigError("mock halluc_rate must be in [0, 1]");
    if (p.max_reported < 0) throw ConfigError("mock max_reported must be >= 0");
    if (p.layers < 1 || p.heads < 1 || p.patch < 1) throw ConfigError("mock layers, heads and patch must be >= 1");
    if (std::any_of(p.errors.begin(), p.errors.end(), [](int e) { return e < 0; })) {
        throw ConfigError("mock errors must be >= 0");
    }
    return p;
}

std::unique_ptr<Transport> make_scripted_transport(const Instance& instance, const ScriptedParams& params,
                                                   std::uint64_t run_seed) {
    return std::make_unique<ScriptedTransport>(instance, params, run_seed);
}

}  // namespace a2r2::backend
