#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "a2r2/backend.hpp"
#include "a2r2/config.hpp"
#include "a2r2/dataset.hpp"
#include "a2r2/record.hpp"
#include "a2r2/render.hpp"

namespace a2r2::loop {

// Generate, then per round: render, compare, localize + verify, refine.
RunResult run_a2r2(const Instance& instance, const RunConfig& config, backend::VisionClient& client,
                   render::Renderer& renderer);

// Same loop with localization and verification removed: refine sees the full
// images and the unverified diff. Requires config.ablate_al_fv.
RunResult run_ablated(const Instance& instance, const RunConfig& config, backend::VisionClient& client,
                      render::Renderer& renderer);

// Single-shot strategies: direct, cot, best_of_n.
RunResult run_baseline(const Instance& instance, const RunConfig& config, backend::VisionClient& client,
                       render::Renderer& renderer, Strategy strategy);

// Dispatches on config.strategy and config.ablate_al_fv.
RunResult run_instance(const Instance& instance, const RunConfig& config, backend::VisionClient& client,
                       render::Renderer& renderer);

/// Hallucination counts for one loop round (1-based, as reported).
struct AuditRow {
    int round = 0;
    std::size_t items = 0;       // judged items
    std::size_t fabricated = 0;
    std::size_t excluded = 0;    // judge parse failures
    double rate() const { return items ? 100.0 * static_cast<double>(fabricated) / static_cast<double>(items) : 0.0; }
};

// Share of comparison-diff items that describe no real discrepancy, per round.
// Items carrying a fabrication flag (scripted backend) are counted directly;
// the rest go to `judge`, and are skipped when no judge is given. Synthesized
// compile-error items are never audited.
std::vector<AuditRow> audit_hallucinations(const std::vector<RunResult>& runs, backend::VisionClient* judge);

struct BatchOutcome {
    std::vector<RunResult> results;  // dataset order
    std::size_t failures = 0;        // aborted runs
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total, const RunResult&)>;

// Runs every instance with a bounded worker pool. When out_dir is set, each
// instance gets <out_dir>/runs/<id>/ and the summary goes to
// <out_dir>/summary.jsonl plus <out_dir>/metrics.csv.
BatchOutcome run_batch(const std::vector<Instance>& instances, const Settings& settings, backend::Endpoint& endpoint,
                       render::Renderer& renderer, const std::optional<std::filesystem::path>& out_dir,
                       const ProgressFn& progress = {});

// Mean of each metric over results that carry final metrics.
std::optional<metrics::MetricSnapshot> aggregate_metrics(const std::vector<RunResult>& results);

// Header plus one row per instance and a final "mean" row.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<RunResult>& results);

backend::RetryPolicy retry_policy(const BackendSettings& settings);

}  // namespace a2r2::loop
