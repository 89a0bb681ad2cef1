#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <variant>
#include <vector>

#include "a2r2/config.hpp"
#include "a2r2/image.hpp"
#include "a2r2/latex.hpp"

namespace a2r2::render {

struct RenderOptions {
    int dpi = 200;
    double timeout_s = 60.0;
};

struct RenderFailure {
    std::string log_excerpt;  // last 20 log lines
    bool timed_out = false;
};

struct RenderResult {
    std::variant<RasterImage, RenderFailure> outcome;
    std::string source_hash;  // SHA-256 over (engine, body, dpi)
    double duration_s = 0.0;
    bool from_cache = false;

    bool ok() const { return std::holds_alternative<RasterImage>(outcome); }
    const RasterImage& image() const { return std::get<RasterImage>(outcome); }
    const RenderFailure& failure() const { return std::get<RenderFailure>(outcome); }
};

// Crop to the bounding box of pixels darker than 250, then add a 4 px white
// margin on every side. An all-white input becomes an 8x8 white canvas.
RasterImage normalize_canvas(const RasterImage& image);

// Standalone display-math document around a (markup-stripped) formula body.
std::string wrap_document(const std::string& body);

enum class Engine { pdflatex, mathtext };

struct Toolchain {
    Engine engine;
    std::string latex_bin;    // pdflatex, or the python interpreter for mathtext
    std::string raster_bin;   // pdftoppm / magick / convert; unused for mathtext
    std::string script;       // mathtext driver script
};

// Resolves the configured engine against the host, throwing ToolchainMissing when
// no usable toolchain is found. "auto" prefers pdflatex and falls back to mathtext.
Toolchain probe_toolchain(const RenderSettings& settings);

std::string sha256_hex(std::string_view data);

/// Thread-safe LaTeX renderer with an in-memory and optional on-disk cache.
/// Each compile runs in its own temporary directory; the number of concurrent
/// subprocess pipelines is bounded by RenderSettings::max_concurrent.
class Renderer {
public:
    explicit Renderer(const RenderSettings& settings);
    Renderer(Toolchain toolchain, const RenderSettings& settings);

    RenderResult render(const LatexDoc& doc);
    RenderResult render(const LatexDoc& doc, const RenderOptions& opts);

    RenderOptions default_options() const { return defaults_; }
    const Toolchain& toolchain() const { return toolchain_; }
    // Number of compile pipelines actually spawned (cache misses).
    std::size_t subprocess_count() const { return spawned_.load(); }

private:
    RenderResult compile(const std::string& body, const RenderOptions& opts, const std::string& hash);
    std::optional<RenderResult> load_cached(const std::string& hash);
    void store(const std::string& hash, const RenderResult& result);

    Toolchain toolchain_;
    RenderOptions defaults_;
    std::filesystem::path cache_dir_;
    std::counting_semaphore<64> slots_;
    std::mutex cache_mutex_;
    std::map<std::string, RenderResult> cache_;
    std::atomic<std::size_t> spawned_{0};
};

}  // namespace a2r2::render
