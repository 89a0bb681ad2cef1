#include <gtest/gtest.h>

#include "cli_support.hpp"

using namespace a2r2;
using namespace a2r2::testing;
namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new TempDir("cli");
        dataset_ = write_dataset(dir_->path(), {formulas()[0], formulas()[3], formulas()[5]});
    }
    static void TearDownTestSuite() { delete dir_; }

    fs::path out(const std::string& name) const { return dir_->path() / name; }
    CliRun batch(const fs::path& to, std::vector<std::string> extra = {}) const {
        std::vector<std::string> args = {"--out", to.string(), "--seed", "7"};
        args.insert(args.end(), extra.begin(), extra.end());
        args.insert(args.end(), {"batch", "--dataset", dataset_.string()});
        return run_cli(args);
    }

    static inline TempDir* dir_ = nullptr;
    static inline fs::path dataset_;
};

TEST_F(CliTest, BatchWritesOneLinePerInstance) {
    const auto r = batch(out("batch"), {"-o", "backend.endpoint=mock:?errors=1"});
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_NE(r.out.find("instances: 3"), std::string::npos);
    EXPECT_EQ(count_lines(out("batch") / "summary.jsonl"), 3u);
    EXPECT_EQ(count_lines(out("batch") / "metrics.csv"), 5u);
    EXPECT_TRUE(fs::exists(out("batch") / "config.json"));
    EXPECT_TRUE(fs::exists(out("batch") / "runs" / "f1" / "final.tex"));
    const auto cfg = nlohmann::json::parse(slurp(out("batch") / "config.json"));
    EXPECT_EQ(cfg["seed"], 7);
    EXPECT_EQ(cfg["backend"]["endpoint"], "mock:?errors=1");
}

TEST_F(CliTest, BatchIsDeterministic) {
    const std::vector<std::string> opts = {"-o", "backend.endpoint=mock:?errors=2&halluc_rate=0.5",
                                           "-o", "loop.parallel_workers=3"};
    ASSERT_EQ(batch(out("det_a"), opts).exit_code, 0);
    ASSERT_EQ(batch(out("det_b"), opts).exit_code, 0);
    EXPECT_EQ(slurp(out("det_a") / "summary.jsonl"), slurp(out("det_b") / "summary.jsonl"));
    EXPECT_EQ(slurp(out("det_a") / "metrics.csv"), slurp(out("det_b") / "metrics.csv"));
}

TEST_F(CliTest, BestOfNRecordsEveryCandidate) {
    ASSERT_EQ(batch(out("bon"), {"-o", "loop.strategy=best_of_n", "-o", "backend.endpoint=mock:?errors=1,2"}).exit_code,
              0);
    const auto result = nlohmann::json::parse(slurp(out("bon") / "runs" / "f0" / "result.json"));
    EXPECT_EQ(result["strategy"], "best_of_n");
    EXPECT_EQ(result["candidates"].size(), 8u);
    EXPECT_EQ(count_lines(out("bon") / "runs" / "f0" / "transcript.jsonl"), 8u);
}

TEST_F(CliTest, InferPrintsFinalLatex) {
    const auto image = dir_->path() / "images" / "f1.png";
    const auto r = run_cli({"--out", out("infer").string(), "-o", "backend.endpoint=mock:?errors=1", "infer",
                            "--image", image.string(), "--latex", formulas()[3]});
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_EQ(r.out, formulas()[3] + "\n");
    EXPECT_FALSE(fs::is_empty(out("infer") / "runs"));
}

TEST_F(CliTest, SweepAblateAuditReport) {
    const auto sweep = run_cli({"--out", out("sweep").string(), "-o",
                                "backend.endpoint=mock:?errors=3&fix_per_round=1", "sweep", "--dataset",
                                dataset_.string(), "--rounds", "1,2,3"});
    EXPECT_EQ(sweep.exit_code, 0);
    EXPECT_EQ(count_lines(out("sweep") / "sweep.csv"), 4u);
    EXPECT_NE(slurp(out("sweep") / "sweep.csv").find("\n3,"), std::string::npos);

    const auto ablate = run_cli({"--out", out("ablate").string(), "-o",
                                 "backend.endpoint=mock:?errors=1&halluc_rate=1", "ablate", "--dataset",
                                 dataset_.string()});
    EXPECT_EQ(ablate.exit_code, 0);
    EXPECT_EQ(count_lines(out("ablate") / "ablation.csv"), 3u);

    const auto audit =
        run_cli({"--out", out("audit").string(), "audit", "--run-dir", (out("ablate") / "ablate" / "full").string()});
    EXPECT_EQ(audit.exit_code, 0);
    EXPECT_NE(audit.out.find("rate"), std::string::npos);
    EXPECT_GE(count_lines(out("audit") / "audit.csv"), 2u);

    const auto report =
        run_cli({"--out", out("report").string(), "report", "--run-dir", (out("ablate") / "ablate" / "full").string()});
    EXPECT_EQ(report.exit_code, 0);
    EXPECT_NE(report.out.find("termination="), std::string::npos);
    EXPECT_TRUE(fs::exists(out("report") / "report.txt"));
}

TEST_F(CliTest, MetricsAndCurate) {
    const auto pred = dir_->path() / "pred.jsonl";
    {
        std::ofstream p(pred);
        p << nlohmann::json{{"id", "f0"}, {"final", formulas()[0]}}.dump() << "\n";
        p << nlohmann::json{{"id", "f1"}, {"final", "f(x) = a x^{2}"}}.dump() << "\n";
        p << nlohmann::json{{"id", "f2"}, {"latex", "\\int_{0}^{1} t dt"}}.dump() << "\n";
    }
    const auto scores = out("scores.jsonl");
    const auto m = run_cli({"--out", out("metrics").string(), "-o", "backend.endpoint=mock:", "metrics", "--pred",
                            pred.string(), "--dataset", dataset_.string(), "--scores-out", scores.string(), "--model",
                            "m1", "--judge"});
    EXPECT_EQ(m.exit_code, 0);
    EXPECT_EQ(count_lines(out("metrics") / "metrics.csv"), 5u);
    ASSERT_EQ(count_lines(scores), 3u);
    const auto first = nlohmann::json::parse(slurp(scores).substr(0, slurp(scores).find('\n')));
    EXPECT_DOUBLE_EQ(first["rouge_m"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(first["judge"].get<double>(), 10.0);

    const std::vector<std::string> one_model = {"-o", R"(curation.models=[{"name": "m1", "weight": 1.0}])"};
    auto args = std::vector<std::string>{"--out", out("curate").string()};
    args.insert(args.end(), one_model.begin(), one_model.end());
    args.insert(args.end(), {"curate", "--scores", scores.string(), "--k", "2", "--direction", "asc"});
    const auto c = run_cli(args);
    EXPECT_EQ(c.exit_code, 0);
    const auto subset = slurp(out("curate") / "subset.txt");
    EXPECT_EQ(count_lines(out("curate") / "subset.txt"), 2u);
    EXPECT_EQ(subset.find("f0"), std::string::npos);  // the exact prediction is the easiest
    EXPECT_TRUE(fs::exists(out("curate") / "provenance.json"));

    args[args.size() - 3] = "9";
    EXPECT_EQ(run_cli(args).exit_code, 2);
}

TEST_F(CliTest, ErrorsMapToExitCodes) {
    EXPECT_EQ(run_cli({"--out", out("empty").string(), "report", "--run-dir", out("nothing_here").string()}).exit_code,
              1);
    EXPECT_EQ(run_cli({"-o", "loop.t_max=-1", "--out", out("bad").string(), "batch", "--dataset", dataset_.string()})
                  .exit_code,
              2);
    EXPECT_EQ(run_cli({"batch"}).exit_code, 2);
    EXPECT_EQ(run_cli({"--out", out("bad2").string(), "-o", "backend.endpoint=gopher://x", "batch", "--dataset",
                       dataset_.string()})
                  .exit_code,
              2);

    // A dataset line with a missing image is reported and the rest still runs.
    const auto partial = dir_->path() / "partial.jsonl";
    std::ofstream(partial) << slurp(dataset_) << R"({"id": "ghost", "image": "images/none.png"})" << "\n";
    const auto r = run_cli({"--out", out("partial").string(), "batch", "--dataset", partial.string()});
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_EQ(count_lines(out("partial") / "summary.jsonl"), 3u);
}
