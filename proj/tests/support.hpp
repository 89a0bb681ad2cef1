#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "a2r2/backend.hpp"
#include "a2r2/config.hpp"
#include "a2r2/dataset.hpp"
#include "a2r2/image.hpp"
#include "a2r2/render.hpp"

namespace a2r2::testing {

// Formulas with at least six substitutable letters or digits each, so a
// fabricated claim always has a correct position to land on.
inline const std::vector<std::string>& formulas() {
    static const std::vector<std::string> f = {
        "x^{2}+y^{2}=z^{2}",
        "\\frac{a+b}{c-d}=e",
        "\\sum_{i=1}^{n} i = \\frac{n(n+1)}{2}",
        "f(x) = a x^{3} + b x + c",
        "\\sqrt{p^{2}+q^{2}} \\leq r + s",
        "\\int_{0}^{1} t^{k} dt = \\frac{1}{k+1}",
        "e^{i \\pi} + 1 = 0 + m - m",
        "\\alpha u + \\beta v = w_{7}",
    };
    return f;
}

// One renderer per test process so the in-memory cache is shared.
inline render::Renderer& shared_renderer() {
    static render::Renderer r{RenderSettings{}};
    return r;
}

inline RasterImage render_ok(const std::string& latex) {
    const auto r = shared_renderer().render(LatexDoc(latex));
    if (!r.ok()) throw std::runtime_error("test formula does not render: " + latex + "\n" + r.failure().log_excerpt);
    return r.image();
}

inline Instance make_instance(const std::string& id, const std::string& latex) {
    return Instance{id, render_ok(latex), LatexDoc(latex)};
}

inline backend::VisionClient make_client(const Instance& inst, const std::string& uri, std::uint64_t run_seed = 0,
                                         PromptTemplates prompts = PromptTemplates::defaults()) {
    auto ep = backend::make_endpoint(uri, BackendSettings{}, run_seed);
    backend::RetryPolicy retry;
    retry.sleep = [](std::chrono::milliseconds) {};
    return backend::VisionClient(ep->connect(inst), std::move(prompts), retry);
}

inline RasterImage random_image(std::mt19937_64& rng, int w, int h) {
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h);
    for (auto& p : px) p = static_cast<std::uint8_t>(rng() & 0xFF);
    return RasterImage(w, h, std::move(px));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("a2r2_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

private:
    std::filesystem::path path_;
};

}  // namespace a2r2::testing
