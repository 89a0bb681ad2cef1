#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "a2r2/backend.hpp"
#include "a2r2/config.hpp"
#include "a2r2/curation.hpp"
#include "a2r2/dataset.hpp"
#include "a2r2/error.hpp"
#include "a2r2/loop.hpp"
#include "a2r2/metrics.hpp"
#include "a2r2/record.hpp"
#include "a2r2/render.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace a2r2;

namespace {

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kConfig = 2;

struct Global {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    int verbose = 0;
    std::string out = "a2r2_out";
};

Settings resolve_settings(const Global& g) {
    auto s = load_settings(g.config.empty() ? std::nullopt : std::optional<fs::path>(g.config), g.overrides);
    if (g.seed) s.seed = *g.seed;
    return s;
}

void persist(const Settings& s, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream(dir / "config.json") << settings_to_json(s).dump(2) << "\n";
}

Dataset load_checked(const std::string& path) {
    auto ds = load_dataset(path);
    for (const auto& e : ds.errors) spdlog::warn("dataset line {} ({}): {}", e.line, e.id, e.message);
    return ds;
}

std::string fmt_metrics(const std::optional<metrics::MetricSnapshot>& m) {
    if (!m) return "(no ground truth)";
    char buf[256];
    std::snprintf(buf, sizeof buf, "R1 %.2f  R2 %.2f  RL %.2f  BLEU4 %.2f  Edit %.2f  Match %.2f  CW-SSIM %.2f",
                  m->rouge1, m->rouge2, m->rougeL, m->bleu4, m->edit_distance, m->match, m->cw_ssim);
    return buf;
}

loop::ProgressFn progress_printer() {
    return [](std::size_t done, std::size_t total, const RunResult& r) {
        std::cerr << "[" << done << "/" << total << "] " << r.instance_id << ": " << to_string(r.termination)
                  << (r.error ? " (" + *r.error + ")" : "") << "\n";
    };
}

std::vector<fs::path> find_run_dirs(const fs::path& root) {
    std::vector<fs::path> out;
    if (!fs::exists(root)) return out;
    if (fs::exists(root / "result.json")) return {root};
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file() && e.path().filename() == "result.json") out.push_back(e.path().parent_path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------

int cmd_infer(const Global& g, const std::string& image, const std::optional<std::string>& latex,
              const std::string& id) {
    const auto s = resolve_settings(g);
    const fs::path out = g.out;
    persist(s, out);
    Instance inst{id, read_png(image), latex ? std::optional<LatexDoc>(LatexDoc(*latex)) : std::nullopt};
    render::Renderer renderer(s.render);
    auto endpoint = backend::make_endpoint(s.run.backend_endpoint, s.backend, s.seed);
    backend::VisionClient client(endpoint->connect(inst), s.run.prompts, loop::retry_policy(s.backend));
    auto result = loop::run_instance(inst, s.run, client, renderer);
    result.transcript = client.transcript();
    write_artifacts(out / "runs" / artifact_dir_name(id), result, s.run.emit_overlays);
    std::cout << result.final.source() << "\n";
    std::cerr << "termination: " << to_string(result.termination) << ", rounds: " << result.rounds.size() << "\n";
    if (result.final_metrics) std::cerr << fmt_metrics(result.final_metrics) << "\n";
    return result.termination == Termination::aborted ? kPartial : kOk;
}

int run_batch_into(const Settings& s, const Dataset& ds, render::Renderer& renderer, const fs::path& out,
                   loop::BatchOutcome* outcome_out = nullptr) {
    persist(s, out);
    auto endpoint = backend::make_endpoint(s.run.backend_endpoint, s.backend, s.seed);
    auto outcome = loop::run_batch(ds.instances, s, *endpoint, renderer, out, progress_printer());
    const bool partial = outcome.failures > 0 || !ds.errors.empty();
    if (outcome_out) *outcome_out = std::move(outcome);
    return partial ? kPartial : kOk;
}

int cmd_batch(const Global& g, const std::string& dataset) {
    const auto s = resolve_settings(g);
    const auto ds = load_checked(dataset);
    render::Renderer renderer(s.render);
    loop::BatchOutcome outcome;
    const int code = run_batch_into(s, ds, renderer, g.out, &outcome);
    std::cout << "instances: " << outcome.results.size() << ", failures: " << outcome.failures << "\n";
    std::cout << "mean: " << fmt_metrics(loop::aggregate_metrics(outcome.results)) << "\n";
    return code;
}

int cmd_metrics(const Global& g, const std::string& pred, const std::string& dataset,
                const std::optional<std::string>& scores_out, const std::string& model, bool judge) {
    const auto s = resolve_settings(g);
    const fs::path out = g.out;
    persist(s, out);
    const auto ds = load_checked(dataset);
    std::map<std::string, const Instance*> by_id;
    for (const auto& inst : ds.instances) by_id[inst.id] = &inst;

    render::Renderer renderer(s.render);
    std::unique_ptr<backend::Endpoint> judge_endpoint;
    if (judge) {
        const auto uri = s.backend.judge_endpoint.empty() ? s.run.backend_endpoint : s.backend.judge_endpoint;
        judge_endpoint = backend::make_endpoint(uri, s.backend, s.seed);
    }
    std::ofstream scores;
    if (scores_out) {
        if (fs::path(*scores_out).has_parent_path()) fs::create_directories(fs::path(*scores_out).parent_path());
        scores.open(*scores_out);
    }

    std::vector<RunResult> rows;
    int code = kOk;
    std::ifstream in(pred);
    if (!in) throw ConfigError("cannot open predictions file " + pred);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DatasetError(line_no, std::string("predictions: ") + e.what());
        }
        const auto id = j.value("id", "");
        const auto latex = j.contains("final") ? j["final"].get<std::string>() : j.value("latex", "");
        const auto it = by_id.find(id);
        if (it == by_id.end() || !it->second->ground_truth) {
            spdlog::warn("prediction '{}' has no ground truth in the dataset; skipped", id);
            code = kPartial;
            continue;
        }
        const Instance& inst = *it->second;
        const LatexDoc cand(latex);
        const auto cand_r = renderer.render(cand);
        const auto ref_r = renderer.render(*inst.ground_truth);
        RunResult r;
        r.instance_id = id;
        r.final = cand;
        r.final_metrics = metrics::evaluate(cand, *inst.ground_truth, cand_r.ok() ? &cand_r.image() : nullptr,
                                            ref_r.ok() ? &ref_r.image() : nullptr);
        if (scores_out) {
            json line_out{{"id", id},
                          {"model", model},
                          {"rouge_m", r.final_metrics->m_rouge / 100.0},
                          {"bleu", r.final_metrics->bleu4 / 100.0},
                          {"edit_raw", r.final_metrics->edit_raw},
                          {"judge", nullptr}};
            if (judge_endpoint && ref_r.ok()) {
                try {
                    backend::VisionClient client(judge_endpoint->connect(inst), s.run.prompts,
                                                 loop::retry_policy(s.backend));
                    line_out["judge"] = cand_r.ok() ? client.judge_similarity(ref_r.image(), cand_r.image()) : 0.0;
                } catch (const JudgeParseError& e) {
                    spdlog::warn("judge score for '{}' unavailable: {}", id, e.what());
                    code = kPartial;
                } catch (const BackendUnavailable& e) {
                    spdlog::warn("judge score for '{}' unavailable: {}", id, e.what());
                    code = kPartial;
                }
            }
            scores << line_out.dump() << "\n";
        }
        rows.push_back(std::move(r));
    }
    loop::write_metrics_csv(out / "metrics.csv", rows);
    std::cout << "instances: " << rows.size() << "\n"
              << "mean: " << fmt_metrics(loop::aggregate_metrics(rows)) << "\n";
    return code;
}

int cmd_curate(const Global& g, const std::vector<std::string>& score_files, std::size_t k,
               const std::optional<std::string>& direction_flag) {
    const auto s = resolve_settings(g);
    const fs::path out = g.out;
    persist(s, out);
    const auto weights = curation::CurationWeights::from_settings(s.curation);
    weights.validate();
    const auto direction = curation::parse_direction(direction_flag.value_or(s.curation.direction));
    std::vector<fs::path> files(score_files.begin(), score_files.end());
    auto records = curation::load_records(files);
    curation::normalize_edit(records);
    const auto finals = curation::final_scores(records, weights);
    if (k > finals.scores.size()) {
        throw ConfigError("k = " + std::to_string(k) + " exceeds the " + std::to_string(finals.scores.size()) +
                          " scored instances");
    }
    const auto ids = curation::select_subset(finals.scores, k, direction);
    {
        std::ofstream list(out / "subset.txt");
        for (const auto& id : ids) list << id << "\n";
    }
    {
        std::ofstream scores(out / "final_scores.jsonl");
        for (const auto& id : ids) scores << json{{"id", id}, {"score", finals.scores.at(id)}}.dump() << "\n";
    }
    std::ofstream(out / "provenance.json")
        << curation::provenance(weights, direction, k, records.size(), finals).dump(2) << "\n";
    std::cout << "selected " << ids.size() << " of " << records.size() << " instances (" << to_string(direction)
              << ", " << finals.excluded.size() << " excluded)\n";
    std::cerr << "note: descending order keeps the easiest instances, ascending the hardest\n";
    return finals.excluded.empty() ? kOk : kPartial;
}

int cmd_sweep(const Global& g, const std::string& dataset, const std::vector<int>& limits) {
    auto s = resolve_settings(g);
    if (limits.empty()) throw ConfigError("sweep needs at least one round limit");
    for (int n : limits) {
        if (n < 1) throw ConfigError("round limits must be >= 1");
    }
    const fs::path out = g.out;
    persist(s, out);
    const auto ds = load_checked(dataset);
    render::Renderer renderer(s.render);
    int code = kOk;
    std::ofstream csv(out / "sweep.csv");
    csv << "round_limit,rouge1,rouge2,rougeL,bleu4,edit_distance,match,cw_ssim,residual_errors\n";
    std::printf("%-11s %8s %8s %8s %8s %8s %8s %8s %9s\n", "round_limit", "ROUGE-1", "ROUGE-2", "ROUGE-L", "BLEU-4",
                "Edit", "Match", "CW-SSIM", "residual");
    for (int n : limits) {
        s.run.t_max = n;
        loop::BatchOutcome outcome;
        if (run_batch_into(s, ds, renderer, out / "sweep" / ("t_" + std::to_string(n)), &outcome) != kOk) {
            code = kPartial;
        }
        const auto m = loop::aggregate_metrics(outcome.results);
        double residual = 0.0;
        std::size_t counted = 0;
        for (const auto& r : outcome.results) {
            if (r.token_edit_distance) {
                residual += static_cast<double>(*r.token_edit_distance);
                ++counted;
            }
        }
        residual = counted ? residual / static_cast<double>(counted) : 0.0;
        char buf[512];
        const metrics::MetricSnapshot z = m.value_or(metrics::MetricSnapshot{});
        std::snprintf(buf, sizeof buf, "%d,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f", n, z.rouge1, z.rouge2, z.rougeL,
                      z.bleu4, z.edit_distance, z.match, z.cw_ssim, residual);
        csv << buf << "\n";
        std::printf("%-11d %8.2f %8.2f %8.2f %8.2f %8.2f %8.2f %8.2f %9.2f\n", n, z.rouge1, z.rouge2, z.rougeL,
                    z.bleu4, z.edit_distance, z.match, z.cw_ssim, residual);
    }
    return code;
}

int cmd_ablate(const Global& g, const std::string& dataset) {
    auto s = resolve_settings(g);
    s.run.strategy = Strategy::a2r2;
    const fs::path out = g.out;
    persist(s, out);
    const auto ds = load_checked(dataset);
    render::Renderer renderer(s.render);
    int code = kOk;
    std::ofstream csv(out / "ablation.csv");
    csv << "variant,rouge1,rouge2,rougeL,bleu4,edit_distance,match,cw_ssim\n";
    for (const bool ablated : {false, true}) {
        s.run.ablate_al_fv = ablated;
        const std::string name = ablated ? "ablated" : "full";
        loop::BatchOutcome outcome;
        if (run_batch_into(s, ds, renderer, out / "ablate" / name, &outcome) != kOk) code = kPartial;
        const auto z = loop::aggregate_metrics(outcome.results).value_or(metrics::MetricSnapshot{});
        char buf[512];
        std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f", name.c_str(), z.rouge1, z.rouge2,
                      z.rougeL, z.bleu4, z.edit_distance, z.match, z.cw_ssim);
        csv << buf << "\n";
        std::cout << name << ": " << fmt_metrics(z) << "\n";
    }
    return code;
}

int cmd_audit(const Global& g, const std::string& run_dir) {
    const auto s = resolve_settings(g);
    const auto dirs = find_run_dirs(run_dir);
    if (dirs.empty()) {
        std::cerr << "no runs found in " << run_dir << "\n";
        return kPartial;
    }
    std::vector<RunResult> runs;
    bool needs_judge = false;
    for (const auto& d : dirs) {
        runs.push_back(read_artifacts(d));
        for (const auto& rec : runs.back().rounds) {
            for (const auto& item : rec.diff.items) needs_judge = needs_judge || !item.fabricated;
        }
    }
    std::unique_ptr<backend::VisionClient> judge;
    const auto uri = s.backend.judge_endpoint.empty() ? s.run.backend_endpoint : s.backend.judge_endpoint;
    if (needs_judge) {
        if (uri.rfind("mock:", 0) == 0) {
            spdlog::warn("items without a fabrication flag need a real judge endpoint; they are skipped");
        } else {
            auto endpoint = backend::make_endpoint(uri, s.backend, s.seed);
            judge = std::make_unique<backend::VisionClient>(endpoint->connect(Instance{"judge", RasterImage::filled(1, 1, 255), {}}),
                                                            s.run.prompts, loop::retry_policy(s.backend));
        }
    }
    const auto rows = loop::audit_hallucinations(runs, judge.get());
    const fs::path out = g.out;
    persist(s, out);
    std::ofstream csv(out / "audit.csv");
    csv << "round,items,fabricated,excluded,rate\n";
    std::printf("%-8s %6s %10s %9s %8s\n", "Round", "items", "fabricated", "excluded", "rate");
    for (const auto& r : rows) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%d,%zu,%zu,%zu,%.4f", r.round, r.items, r.fabricated, r.excluded, r.rate());
        csv << buf << "\n";
        std::printf("%-8d %6zu %10zu %9zu %7.1f%%\n", r.round, r.items, r.fabricated, r.excluded, r.rate());
    }
    return kOk;
}

int cmd_report(const Global& g, const std::string& run_dir) {
    const auto dirs = find_run_dirs(run_dir);
    if (dirs.empty()) {
        std::cerr << "no runs found in " << run_dir << "\n";
        return kPartial;
    }
    const fs::path out = g.out;
    fs::create_directories(out);
    std::ostringstream text;
    int code = kOk;
    for (const auto& d : dirs) {
        RunResult r;
        try {
            r = read_artifacts(d);
        } catch (const Error& e) {
            text << "== " << d.string() << ": unreadable (" << e.what() << ")\n";
            code = kPartial;
            continue;
        }
        text << "== " << r.instance_id << " [" << r.strategy << "] termination=" << to_string(r.termination)
             << " rounds=" << r.rounds.size() << "\n";
        std::vector<std::string> missing;
        if (!fs::exists(d / "final.tex")) missing.push_back("final.tex");
        if (!fs::exists(d / "transcript.jsonl")) missing.push_back("transcript.jsonl");
        for (const auto& rec : r.rounds) {
            const auto k = std::to_string(rec.round);
            text << "  round " << rec.round << ": " << rec.hypothesis.source() << "\n";
            if (!rec.render_hash.empty() && rec.compile_log.empty() && !rec.render) missing.push_back("round_" + k + ".png");
            text << "    render: " << (rec.compile_log.empty() ? "ok" : "compile failure") << ", diff items: "
                 << rec.diff.items.size() << ", verified: "
                 << (rec.verification_ran ? std::to_string(rec.verified_diff.items.size()) : std::string("skipped"))
                 << ", localization: " << rec.localization << (rec.refined ? ", refined" : "")
                 << (rec.no_progress ? " (no progress)" : "") << "\n";
            for (const auto& item : rec.diff.items) {
                text << "      " << item.index << ". " << item.description
                     << (item.fabricated && *item.fabricated ? "  [fabricated]" : "") << "\n";
            }
            if (rec.input_rect && r.input) {
                const auto target = out / "overlays" / artifact_dir_name(r.instance_id);
                fs::create_directories(target);
                const auto rgb = attnloc::overlay_rgb(*r.input, attnloc::BinaryMask{}, *rec.input_rect);
                write_png_rgb(target / ("overlay_" + k + ".png"), r.input->width(), r.input->height(), rgb);
            }
        }
        if (r.final_metrics) text << "  final: " << fmt_metrics(r.final_metrics) << "\n";
        if (r.error) text << "  error: " << *r.error << "\n";
        if (!missing.empty()) {
            text << "  missing artifacts:";
            for (const auto& m : missing) text << " " << m;
            text << "\n";
        }
    }
    std::cout << text.str();
    std::ofstream(out / "report.txt") << text.str();
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Iterative image-to-LaTeX refinement with attention localization"};
    app.require_subcommand(1);
    Global g;
    app.add_option("--config", g.config, "Config file (JSON)")->check(CLI::ExistingFile);
    app.add_option("-o,--set", g.overrides, "Config override key=value (repeatable)");
    app.add_option("--seed", g.seed, "Random seed for every stochastic component");
    app.add_flag("-v,--verbose", g.verbose, "More logging (repeatable)");
    app.add_option("--out", g.out, "Output directory")->capture_default_str();

    std::string image, dataset, pred, run_dir, id = "instance", model = "model", rounds_arg = "1,2,3,4,5";
    std::optional<std::string> latex, scores_out, direction;
    std::vector<std::string> score_files;
    std::size_t k = 1100;
    bool judge = false;

    auto* infer = app.add_subcommand("infer", "Run one image through the configured strategy");
    infer->add_option("--image", image, "Input PNG")->required()->check(CLI::ExistingFile);
    infer->add_option("--latex", latex, "Ground-truth LaTeX (enables metrics)");
    infer->add_option("--id", id, "Instance id")->capture_default_str();

    auto* batch = app.add_subcommand("batch", "Run a dataset");
    batch->add_option("--dataset", dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);

    auto* met = app.add_subcommand("metrics", "Score predictions against a dataset");
    met->add_option("--pred", pred, "Predictions JSONL (id + final or latex)")->required()->check(CLI::ExistingFile);
    met->add_option("--dataset", dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    met->add_option("--scores-out", scores_out, "Write curation score lines here");
    met->add_option("--model", model, "Model name for curation score lines")->capture_default_str();
    met->add_flag("--judge", judge, "Collect judge similarity scores");

    auto* cur = app.add_subcommand("curate", "Select a difficulty subset from score files");
    cur->add_option("--scores", score_files, "Scores JSONL (repeatable)")->required()->check(CLI::ExistingFile);
    cur->add_option("--k", k, "Subset size")->capture_default_str();
    cur->add_option("--direction", direction, "asc (hardest first) or desc")->check(CLI::IsMember({"asc", "desc"}));

    auto* sweep = app.add_subcommand("sweep", "Batch runs under several round limits");
    sweep->add_option("--dataset", dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    sweep->add_option("--rounds", rounds_arg, "Comma-separated round limits")->capture_default_str();

    auto* ablate = app.add_subcommand("ablate", "Full pipeline versus localization and verification removed");
    ablate->add_option("--dataset", dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);

    auto* audit = app.add_subcommand("audit", "Per-round hallucination rates of recorded comparisons");
    audit->add_option("--run-dir", run_dir, "Run directory")->required();

    auto* report = app.add_subcommand("report", "Summarize run artifacts");
    report->add_option("--run-dir", run_dir, "Run directory")->required();

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    auto logger = spdlog::stderr_color_mt("a2r2");
    spdlog::set_default_logger(logger);
    spdlog::set_level(g.verbose >= 2 ? spdlog::level::debug : g.verbose == 1 ? spdlog::level::info
                                                                             : spdlog::level::warn);

    try {
        if (*infer) return cmd_infer(g, image, latex, id);
        if (*batch) return cmd_batch(g, dataset);
        if (*met) return cmd_metrics(g, pred, dataset, scores_out, model, judge);
        if (*cur) return cmd_curate(g, score_files, k, direction);
        if (*sweep) {
            std::vector<int> limits;
            std::stringstream ss(rounds_arg);
            for (std::string part; std::getline(ss, part, ',');) {
                try {
                    limits.push_back(std::stoi(part));
                } catch (const std::logic_error&) {
                    throw ConfigError("invalid round limit '" + part + "'");
                }
            }
            return cmd_sweep(g, dataset, limits);
        }
        if (*ablate) return cmd_ablate(g, dataset);
        if (*audit) return cmd_audit(g, run_dir);
        if (*report) return cmd_report(g, run_dir);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kConfig;
    } catch (const ToolchainMissing& e) {
        std::cerr << "render toolchain missing: " << e.what() << "\n";
        return kConfig;
    } catch (const DatasetError& e) {
        std::cerr << "dataset error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    }
    return kConfig;
}
