#include "a2r2/render.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <unistd.h>

#include "a2r2/error.hpp"
#include "process.hpp"

#ifndef A2R2_DEFAULT_MATHTEXT_SCRIPT
#define A2R2_DEFAULT_MATHTEXT_SCRIPT ""
#endif

namespace a2r2::render {

namespace fs = std::filesystem;

RasterImage normalize_canvas(const RasterImage& image) {
    constexpr int kMargin = 4;
    constexpr std::uint8_t kInk = 250;
    int top = image.height(), bottom = -1, left = image.width(), right = -1;
    for (int r = 0; r < image.height(); ++r) {
        for (int c = 0; c < image.width(); ++c) {
            if (image.at(r, c) >= kInk) continue;
            top = std::min(top, r);
            bottom = std::max(bottom, r);
            left = std::min(left, c);
            right = std::max(right, c);
        }
    }
    if (bottom < 0) return RasterImage::filled(8, 8, 255, image.dpi());

    const int cw = right - left + 1;
    const int ch = bottom - top + 1;
    const int w = cw + 2 * kMargin;
    const int h = ch + 2 * kMargin;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h, 255);
    for (int r = 0; r < ch; ++r) {
        for (int c = 0; c < cw; ++c) {
            out[static_cast<std::size_t>(r + kMargin) * w + (c + kMargin)] = image.at(top + r, left + c);
        }
    }
    return RasterImage(w, h, std::move(out), image.dpi());
}

std::string wrap_document(const std::string& body) {
    return "\\documentclass[preview,border=0pt]{standalone}\n"
           "\\usepackage{amsmath,amssymb,amsfonts}\n"
           "\\begin{document}\n"
           "$\\displaystyle " +
           body +
           "$\n"
           "\\end{document}\n";
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return out.str();
}

namespace {

bool python_has_matplotlib(const std::string& python) {
    char tmpl[] = "/tmp/a2r2-probe-XXXXXX";
    const int fd = mkstemp(tmpl);
    if (fd < 0) return false;
    ::close(fd);
    const auto r = detail::run_process({python, "-c", "import matplotlib.mathtext"}, fs::temp_directory_path(), 60.0,
                                       tmpl);
    fs::remove(tmpl);
    return !r.spawn_failed && !r.timed_out && r.exit_code == 0;
}

std::string tail_lines(const fs::path& log, std::size_t n) {
    std::ifstream in(log);
    std::deque<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        lines.push_back(line);
        if (lines.size() > n) lines.pop_front();
    }
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    return out;
}

std::string engine_name(Engine e) { return e == Engine::pdflatex ? "pdflatex" : "mathtext"; }

// RAII temporary directory.
class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "a2r2-render-XXXXXX").string();
        if (!mkdtemp(tmpl.data())) throw Error("cannot create temporary directory");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

}  // namespace

Toolchain probe_toolchain(const RenderSettings& s) {
    if (s.engine != "auto" && s.engine != "pdflatex" && s.engine != "mathtext") {
        throw ConfigError("render.engine must be auto, pdflatex or mathtext");
    }
    if (s.engine != "mathtext") {
        const auto latex = detail::which(s.latex_bin.empty() ? "pdflatex" : s.latex_bin);
        std::optional<fs::path> raster;
        if (!s.raster_bin.empty()) {
            raster = detail::which(s.raster_bin);
        } else {
            for (const char* candidate : {"pdftoppm", "magick", "convert"}) {
                if ((raster = detail::which(candidate))) break;
            }
        }
        if (latex && raster) return {Engine::pdflatex, latex->string(), raster->string(), {}};
        if (s.engine == "pdflatex") {
            throw ToolchainMissing(latex ? "no raster converter found (set A2R2_RASTER_BIN)"
                                         : "LaTeX compiler not found (set A2R2_LATEX_BIN)");
        }
    }
    const auto python = detail::which(s.python_bin);
    std::string script = s.mathtext_script.empty() ? A2R2_DEFAULT_MATHTEXT_SCRIPT : s.mathtext_script;
    if (!python) throw ToolchainMissing("no pdflatex toolchain and no python interpreter '" + s.python_bin + "'");
    if (script.empty() || !fs::exists(script)) {
        throw ToolchainMissing("mathtext driver script not found (set A2R2_MATHTEXT_SCRIPT)");
    }
    if (!python_has_matplotlib(python->string())) {
        throw ToolchainMissing("no pdflatex toolchain and matplotlib is not importable by " + python->string());
    }
    return {Engine::mathtext, python->string(), {}, script};
}

Renderer::Renderer(const RenderSettings& settings) : Renderer(probe_toolchain(settings), settings) {}

Renderer::Renderer(Toolchain toolchain, const RenderSettings& settings)
    : toolchain_(std::move(toolchain)),
      defaults_{settings.dpi, settings.timeout_s},
      cache_dir_(settings.cache_dir),
      slots_(std::clamp(settings.max_concurrent, 1, 64)) {
    if (!cache_dir_.empty()) fs::create_directories(cache_dir_);
}

RenderResult Renderer::render(const LatexDoc& doc) { return render(doc, defaults_); }

RenderResult Renderer::render(const LatexDoc& doc, const RenderOptions& opts) {
    const std::string body = strip_model_markup(doc.source());
    const std::string hash =
        sha256_hex(engine_name(toolchain_.engine) + '\0' + std::to_string(opts.dpi) + '\0' + body);
    if (auto cached = load_cached(hash)) return *cached;

    RenderResult result = [&] {
        slots_.acquire();
        struct Release {
            std::counting_semaphore<64>& s;
            ~Release() { s.release(); }
        } release{slots_};
        return compile(body, opts, hash);
    }();
    store(hash, result);
    return result;
}

std::optional<RenderResult> Renderer::load_cached(const std::string& hash) {
    std::lock_guard lock(cache_mutex_);
    if (const auto it = cache_.find(hash); it != cache_.end()) {
        RenderResult r = it->second;
        r.from_cache = true;
        r.duration_s = 0.0;
        return r;
    }
    if (cache_dir_.empty()) return std::nullopt;
    const auto png = cache_dir_ / (hash + ".png");
    const auto fail = cache_dir_ / (hash + ".fail");
    std::optional<RenderResult> r;
    try {
        if (fs::exists(png)) {
            r = RenderResult{read_png(png), hash, 0.0, true};
        } else if (fs::exists(fail)) {
            std::ifstream in(fail);
            std::stringstream ss;
            ss << in.rdbuf();
            r = RenderResult{RenderFailure{ss.str(), false}, hash, 0.0, true};
        }
    } catch (const Error&) {
        return std::nullopt;  // unreadable cache entry: recompile
    }
    if (r) {
        RenderResult stored = *r;
        stored.from_cache = false;
        cache_.emplace(hash, std::move(stored));
    }
    return r;
}

void Renderer::store(const std::string& hash, const RenderResult& result) {
    std::lock_guard lock(cache_mutex_);
    if (!result.ok() && result.failure().timed_out) return;  // transient
    cache_.emplace(hash, result);
    if (cache_dir_.empty()) return;
    // Write-then-rename so concurrent processes never read partial files.
    const auto tmp = cache_dir_ / (hash + ".tmp" + std::to_string(::getpid()));
    if (result.ok()) {
        write_png(tmp, result.image());
        fs::rename(tmp, cache_dir_ / (hash + ".png"));
    } else {
        {
            std::ofstream out(tmp);
            out << result.failure().log_excerpt;
        }
        fs::rename(tmp, cache_dir_ / (hash + ".fail"));
    }
}

RenderResult Renderer::compile(const std::string& body, const RenderOptions& opts, const std::string& hash) {
    const auto started = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count(); };
    auto failure = [&](std::string log, bool timed_out) {
        return RenderResult{RenderFailure{std::move(log), timed_out}, hash, elapsed(), false};
    };
    if (body.empty()) return failure("empty LaTeX source\n", false);

    TempDir dir;
    const auto log = dir.path() / "render.log";
    const auto png = dir.path() / "out.png";
    ++spawned_;

    if (toolchain_.engine == Engine::mathtext) {
        std::ofstream(dir.path() / "body.tex") << body;
        const auto r = detail::run_process({toolchain_.latex_bin, toolchain_.script, "--dpi", std::to_string(opts.dpi),
                                            "--out", png.string(), "body.tex"},
                                           dir.path(), opts.timeout_s, log);
        if (r.timed_out) return failure("render timed out after " + std::to_string(opts.timeout_s) + " s\n", true);
        if (r.spawn_failed) return failure("cannot start " + toolchain_.latex_bin + "\n", false);
        if (r.exit_code != 0 || !fs::exists(png)) return failure(tail_lines(log, 20), false);
    } else {
        std::ofstream(dir.path() / "doc.tex") << wrap_document(body);
        const auto r = detail::run_process(
            {toolchain_.latex_bin, "-interaction=nonstopmode", "-halt-on-error", "-no-shell-escape", "doc.tex"},
            dir.path(), opts.timeout_s, log);
        if (r.timed_out) return failure("LaTeX compile timed out after " + std::to_string(opts.timeout_s) + " s\n", true);
        if (r.spawn_failed) return failure("cannot start " + toolchain_.latex_bin + "\n", false);
        if (r.exit_code != 0 || !fs::exists(dir.path() / "doc.pdf")) {
            const auto tex_log = dir.path() / "doc.log";
            return failure(tail_lines(fs::exists(tex_log) ? tex_log : log, 20), false);
        }
        const auto remaining = std::max(1.0, opts.timeout_s - elapsed());
        const std::string dpi = std::to_string(opts.dpi);
        std::vector<std::string> argv;
        if (fs::path(toolchain_.raster_bin).filename().string().find("pdftoppm") != std::string::npos) {
            argv = {toolchain_.raster_bin, "-r", dpi, "-gray", "-png", "-singlefile", "doc.pdf", "out"};
        } else {
            argv = {toolchain_.raster_bin, "-density", dpi, "doc.pdf", "-background", "white",
                    "-flatten", "-colorspace", "Gray", "out.png"};
        }
        const auto rr = detail::run_process(argv, dir.path(), remaining, log);
        if (rr.timed_out) return failure("rasterization timed out\n", true);
        if (rr.spawn_failed || rr.exit_code != 0 || !fs::exists(png)) return failure(tail_lines(log, 20), false);
    }

    RasterImage raw = read_png(png);
    RasterImage normalized = normalize_canvas(RasterImage(raw.width(), raw.height(),
                                                          std::vector<std::uint8_t>(raw.pixels().begin(),
                                                                                    raw.pixels().end()),
                                                          opts.dpi));
    return RenderResult{std::move(normalized), hash, elapsed(), false};
}

}  // namespace a2r2::render
