#include "a2r2/loop.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "a2r2/error.hpp"

namespace a2r2::loop {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCompileErrorPrefix = "compilation error: ";

std::string excerpt(const std::string& log) {
    // The last non-empty lines carry the actual error.
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < log.size()) {
        auto nl = log.find('\n', start);
        if (nl == std::string::npos) nl = log.size();
        if (nl > start) lines.push_back(log.substr(start, nl - start));
        start = nl + 1;
    }
    std::string out;
    for (std::size_t i = lines.size() > 3 ? lines.size() - 3 : 0; i < lines.size(); ++i) {
        if (!out.empty()) out += " | ";
        out += lines[i];
    }
    if (out.size() > 300) out = out.substr(out.size() - 300);
    return out.empty() ? "unknown error" : out;
}

struct Reference {
    const Instance& instance;
    std::optional<RasterImage> render;  // ground-truth render, when it compiles
};

Reference make_reference(const Instance& instance, render::Renderer& renderer) {
    Reference ref{instance, std::nullopt};
    if (instance.ground_truth) {
        auto r = renderer.render(*instance.ground_truth);
        if (r.ok()) {
            ref.render = r.image();
        } else {
            spdlog::warn("ground truth of '{}' does not render; visual metrics will be 0", instance.id);
        }
    }
    return ref;
}

std::optional<metrics::MetricSnapshot> snapshot(const LatexDoc& hypothesis, const std::optional<RasterImage>& render,
                                                const Reference& ref) {
    if (!ref.instance.ground_truth) return std::nullopt;
    return metrics::evaluate(hypothesis, *ref.instance.ground_truth, render ? &*render : nullptr,
                             ref.render ? &*ref.render : nullptr);
}

void render_into(IterationRecord& rec, render::Renderer& renderer) {
    const auto r = renderer.render(rec.hypothesis);
    rec.render_hash = r.source_hash;
    if (r.ok()) {
        rec.render = r.image();
    } else {
        rec.compile_log = r.failure().log_excerpt;
    }
}

void finish(RunResult& res, const Reference& ref, render::Renderer& renderer) {
    if (!ref.instance.ground_truth) return;
    std::optional<RasterImage> final_render;
    if (!res.rounds.empty() && res.rounds.back().hypothesis == res.final) {
        final_render = res.rounds.back().render;
    } else if (!res.final.empty()) {
        const auto r = renderer.render(res.final);
        if (r.ok()) final_render = r.image();
    }
    res.final_metrics = snapshot(res.final, final_render, ref);
    res.token_edit_distance = metrics::token_edit_distance(res.final.tokens(), ref.instance.ground_truth->tokens());
}

void abort_run(RunResult& res, const std::exception& e) {
    res.termination = Termination::aborted;
    res.error = e.what();
    spdlog::error("instance '{}': {}", res.instance_id, e.what());
}

RunResult refinement_loop(const Instance& instance, const RunConfig& cfg, backend::VisionClient& client,
                          render::Renderer& renderer, bool ablated) {
    RunResult res;
    res.instance_id = instance.id;
    res.strategy = ablated ? "a2r2_ablated" : "a2r2";
    res.input = instance.image;
    const auto ref = make_reference(instance, renderer);
    const RasterImage& input = instance.image;

    try {
        LatexDoc hypothesis = client.generate(input);
        res.final = hypothesis;
        int stalls = 0;
        for (int t = 0; t <= cfg.t_max; ++t) {
            IterationRecord rec;
            rec.round = t;
            rec.hypothesis = hypothesis;
            render_into(rec, renderer);
            rec.metrics = snapshot(hypothesis, rec.render, ref);

            RasterImage region_a = input;
            RasterImage region_b = rec.render ? *rec.render : RasterImage::filled(8, 8, 255);
            if (!rec.render) {
                rec.diff = DiffReport::from_descriptions({kCompileErrorPrefix + excerpt(rec.compile_log)});
                rec.verified_diff = rec.diff;
                rec.localization = "skipped";
                if (t == cfg.t_max) {
                    res.rounds.push_back(std::move(rec));
                    res.termination = Termination::compile_dead_end;
                    break;
                }
            } else {
                rec.diff = client.compare(input, *rec.render);
                if (rec.diff.empty()) {
                    rec.localization = "skipped";
                    res.rounds.push_back(std::move(rec));
                    res.termination = Termination::no_differences;
                    break;
                }
                if (ablated) {
                    rec.verified_diff = rec.diff;
                    rec.localization = "skipped";
                } else {
                    try {
                        const auto caps = client.capabilities();
                        if (!caps.attention) throw AttentionUnavailable("backend does not expose attention");
                        const auto layers = cfg.resolve_layers(caps.layers);
                        const auto stack = client.fetch_attention(input, rec.diff.numbered(), layers);
                        auto loc = attnloc::localize(input, *rec.render, stack, cfg);
                        region_a = loc.regions.input;
                        region_b = loc.regions.rendered;
                        rec.region_box = loc.box;
                        rec.input_rect = loc.regions.input_rect;
                        rec.rendered_rect = loc.regions.rendered_rect;
                        rec.attention_mask = std::move(loc.mask);
                        rec.localization = "attention";
                    } catch (const AttentionUnavailable& e) {
                        rec.localization = std::string("fallback: ") + e.what();
                    } catch (const NoSalientRegion& e) {
                        rec.localization = std::string("fallback: ") + e.what();
                    }
                    rec.regions.emplace(region_a, region_b);
                    rec.verified_diff = client.verify(rec.diff, region_a, region_b);
                    rec.verification_ran = true;
                    if (rec.verified_diff.empty()) {
                        res.rounds.push_back(std::move(rec));
                        res.termination = Termination::no_differences;
                        break;
                    }
                }
                if (t == cfg.t_max) {
                    res.rounds.push_back(std::move(rec));
                    res.termination = Termination::t_max;
                    break;
                }
            }

            const auto outcome = client.refine(hypothesis, region_a, region_b, rec.verified_diff);
            rec.refined = true;
            rec.no_progress = outcome.no_progress;
            stalls = outcome.no_progress ? stalls + 1 : 0;
            const bool compiled = rec.render.has_value();
            res.rounds.push_back(std::move(rec));
            hypothesis = outcome.latex;
            res.final = hypothesis;
            if (stalls >= 2) {
                res.termination = compiled ? Termination::no_progress : Termination::compile_dead_end;
                break;
            }
        }
    } catch (const BackendUnavailable& e) {
        abort_run(res, e);
    } catch (const EmptyGeneration& e) {
        abort_run(res, e);
    } catch (const ProtocolError& e) {
        abort_run(res, e);
    }
    finish(res, ref, renderer);
    return res;
}

}  // namespace

RunResult run_a2r2(const Instance& instance, const RunConfig& config, backend::VisionClient& client,
                   render::Renderer& renderer) {
    return refinement_loop(instance, config, client, renderer, false);
}

RunResult run_ablated(const Instance& instance, const RunConfig& config, backend::VisionClient& client,
                      render::Renderer& renderer) {
    if (!config.ablate_al_fv) throw std::invalid_argument("run_ablated requires ablate_al_fv");
    return refinement_loop(instance, config, client, renderer, true);
}

RunResult run_baseline(const Instance& instance, const RunConfig& config, backend::VisionClient& client,
                       render::Renderer& renderer, Strategy strategy) {
    if (strategy == Strategy::a2r2) throw std::invalid_argument("run_baseline needs direct, cot or best_of_n");
    RunResult res;
    res.instance_id = instance.id;
    res.strategy = to_string(strategy);
    res.input = instance.image;
    const auto ref = make_reference(instance, renderer);

    try {
        LatexDoc chosen;
        if (strategy == Strategy::best_of_n) {
            for (int i = 0; i < config.n_samples; ++i) {
                Candidate c;
                c.sample = i;
                try {
                    c.latex = client.generate(instance.image, {}, i);
                } catch (const EmptyGeneration& e) {
                    spdlog::warn("instance '{}' sample {}: {}", instance.id, i, e.what());
                    res.candidates.push_back(std::move(c));
                    continue;
                }
                const auto r = renderer.render(c.latex);
                c.compiled = r.ok();
                c.score = r.ok() ? metrics::cw_ssim(r.image(), instance.image) : 0.0;
                if (!c.latex.empty() && (res.selected_sample < 0 || c.score > res.candidates[res.selected_sample].score)) {
                    res.selected_sample = i;
                }
                res.candidates.push_back(std::move(c));
            }
            if (res.selected_sample < 0) throw EmptyGeneration("no Best-of-N sample produced LaTeX");
            chosen = res.candidates[res.selected_sample].latex;
        } else {
            chosen = client.generate(instance.image, strategy == Strategy::cot ? config.prompts.cot_suffix : "");
        }
        IterationRecord rec;
        rec.round = 0;
        rec.hypothesis = chosen;
        rec.localization = "skipped";
        render_into(rec, renderer);
        rec.metrics = snapshot(chosen, rec.render, ref);
        res.termination = rec.render ? Termination::t_max : Termination::compile_dead_end;
        res.rounds.push_back(std::move(rec));
        res.final = chosen;
    } catch (const BackendUnavailable& e) {
        abort_run(res, e);
    } catch (const EmptyGeneration& e) {
        abort_run(res, e);
    } catch (const ProtocolError& e) {
        abort_run(res, e);
    }
    finish(res, ref, renderer);
    return res;
}

RunResult run_instance(const Instance& instance, const RunConfig& config, backend::VisionClient& client,
                       render::Renderer& renderer) {
    if (config.strategy != Strategy::a2r2) return run_baseline(instance, config, client, renderer, config.strategy);
    return config.ablate_al_fv ? run_ablated(instance, config, client, renderer)
                               : run_a2r2(instance, config, client, renderer);
}

std::vector<AuditRow> audit_hallucinations(const std::vector<RunResult>& runs, backend::VisionClient* judge) {
    std::vector<AuditRow> rows;
    for (const auto& run : runs) {
        for (const auto& rec : run.rounds) {
            if (!rec.render) continue;  // synthesized compile-error diff
            if (static_cast<int>(rows.size()) <= rec.round) {
                for (int k = static_cast<int>(rows.size()); k <= rec.round; ++k) rows.push_back({k + 1, 0, 0, 0});
            }
            auto& row = rows[rec.round];
            for (const auto& item : rec.diff.items) {
                if (item.fabricated) {
                    ++row.items;
                    row.fabricated += *item.fabricated ? 1 : 0;
                } else if (judge && run.input) {
                    try {
                        const bool fabricated = judge->audit_item(*run.input, *rec.render, item.description);
                        ++row.items;
                        row.fabricated += fabricated ? 1 : 0;
                    } catch (const JudgeParseError& e) {
                        ++row.excluded;
                        spdlog::warn("audit of '{}' round {} item {} excluded: {}", run.instance_id, rec.round,
                                     item.index, e.what());
                    }
                }
            }
        }
    }
    return rows;
}

backend::RetryPolicy retry_policy(const BackendSettings& settings) {
    backend::RetryPolicy p;
    p.max_attempts = settings.max_attempts;
    p.backoff = std::chrono::milliseconds(settings.backoff_ms);
    return p;
}

std::optional<metrics::MetricSnapshot> aggregate_metrics(const std::vector<RunResult>& results) {
    metrics::MetricSnapshot sum;
    std::size_t n = 0;
    for (const auto& r : results) {
        if (!r.final_metrics) continue;
        const auto& m = *r.final_metrics;
        sum.rouge1 += m.rouge1;
        sum.rouge2 += m.rouge2;
        sum.rougeL += m.rougeL;
        sum.m_rouge += m.m_rouge;
        sum.bleu4 += m.bleu4;
        sum.edit_distance += m.edit_distance;
        sum.edit_raw += m.edit_raw;
        sum.match += m.match;
        sum.cw_ssim += m.cw_ssim;
        ++n;
    }
    if (n == 0) return std::nullopt;
    const double d = static_cast<double>(n);
    sum.rouge1 /= d;
    sum.rouge2 /= d;
    sum.rougeL /= d;
    sum.m_rouge /= d;
    sum.bleu4 /= d;
    sum.edit_distance /= d;
    sum.edit_raw = static_cast<std::size_t>(static_cast<double>(sum.edit_raw) / d + 0.5);
    sum.match /= d;
    sum.cw_ssim /= d;
    return sum;
}

void write_metrics_csv(const fs::path& path, const std::vector<RunResult>& results) {
    std::ofstream out(path);
    out << "id,rouge1,rouge2,rougeL,bleu4,edit_distance,match,cw_ssim\n";
    auto row = [&](const std::string& id, const std::optional<metrics::MetricSnapshot>& m) {
        out << id;
        if (m) {
            char buf[256];
            std::snprintf(buf, sizeof buf, ",%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f", m->rouge1, m->rouge2, m->rougeL,
                          m->bleu4, m->edit_distance, m->match, m->cw_ssim);
            out << buf;
        } else {
            out << ",,,,,,,";
        }
        out << "\n";
    };
    for (const auto& r : results) {
        // Quote ids that would break the CSV.
        std::string id = r.instance_id;
        if (id.find_first_of(",\"\n") != std::string::npos) {
            std::string q = "\"";
            for (char c : id) q += c == '"' ? std::string("\"\"") : std::string(1, c);
            id = q + "\"";
        }
        row(id, r.final_metrics);
    }
    row("mean", aggregate_metrics(results));
}

BatchOutcome run_batch(const std::vector<Instance>& instances, const Settings& settings, backend::Endpoint& endpoint,
                       render::Renderer& renderer, const std::optional<fs::path>& out_dir, const ProgressFn& progress) {
    std::vector<std::optional<RunResult>> slots(instances.size());
    std::atomic<std::size_t> next{0};
    std::size_t done = 0;
    std::mutex progress_mutex;
    if (out_dir) fs::create_directories(*out_dir / "runs");

    auto work = [&] {
        for (std::size_t i = next++; i < instances.size(); i = next++) {
            const auto& inst = instances[i];
            RunResult r;
            try {
                backend::VisionClient client(endpoint.connect(inst), settings.run.prompts,
                                             retry_policy(settings.backend));
                r = run_instance(inst, settings.run, client, renderer);
                r.transcript = client.transcript();
            } catch (const Error& e) {
                r.instance_id = inst.id;
                r.strategy = settings.run.ablate_al_fv && settings.run.strategy == Strategy::a2r2
                                 ? "a2r2_ablated"
                                 : to_string(settings.run.strategy);
                r.input = inst.image;
                abort_run(r, e);
            }
            if (out_dir) write_artifacts(*out_dir / "runs" / artifact_dir_name(inst.id), r, settings.run.emit_overlays);
            std::lock_guard lock(progress_mutex);
            ++done;
            if (progress) progress(done, instances.size(), r);
            slots[i] = std::move(r);
        }
    };
    const auto n_workers =
        std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(settings.run.parallel_workers),
                                                       instances.size()));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    BatchOutcome outcome;
    for (auto& s : slots) {
        if (s->termination == Termination::aborted) ++outcome.failures;
        outcome.results.push_back(std::move(*s));
    }
    if (out_dir) {
        std::ofstream summary(*out_dir / "summary.jsonl");
        for (const auto& r : outcome.results) summary << summary_line(r).dump() << "\n";
        write_metrics_csv(*out_dir / "metrics.csv", outcome.results);
    }
    return outcome;
}

}  // namespace a2r2::loop
