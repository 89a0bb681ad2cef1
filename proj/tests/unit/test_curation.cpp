#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "a2r2/curation.hpp"
#include "a2r2/error.hpp"
#include "support.hpp"

using namespace a2r2;
using namespace a2r2::curation;

namespace {

CurationWeights defaults() { return CurationWeights::from_settings(CurationSettings{}); }

ModelScores scores(double r, double b, double d, std::optional<double> g) {
    ModelScores s;
    s.rouge_m = r;
    s.bleu = b;
    s.edit_raw = d;
    s.judge = g;
    return s;
}

CurationRecord uniform(const std::string& id, const ModelScores& s) {
    CurationRecord r{id, {}};
    for (const auto& [name, _] : defaults().model_weights) r.models[name] = s;
    return r;
}

std::vector<CurationRecord> random_pool(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<CurationRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        CurationRecord r{"id" + std::to_string(i), {}};
        for (const auto& [name, _] : defaults().model_weights) {
            r.models[name] = scores(u(rng), u(rng), 40.0 * u(rng), 10.0 * u(rng));
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

TEST(Composite, WorkedExamples) {
    const auto w = defaults();
    EXPECT_DOUBLE_EQ(composite_score(1.0, 1.0, 0.0, w), 1.0);
    EXPECT_NEAR(composite_score(0.8, 0.6, 0.5, w), 0.66, 1e-12);
    EXPECT_DOUBLE_EQ(composite_score(0.0, 0.0, 1.0, w), 0.0);
}

TEST(Final, WorkedExamples) {
    const auto w = defaults();
    auto s = scores(0.8, 0.6, 0.0, 7.0);
    s.edit_norm = 0.5;
    EXPECT_NEAR(model_final_score(s, w), 1.01, 1e-12);

    // Per-model finals 1.0, 0.5 and 0.0 under the default model weights.
    CurationRecord r{"x", {}};
    r.models["qwen2.5-vl-7b"] = scores(1.0, 1.0, 0.0, 0.0);
    r.models["qwen2.5-vl-32b"] = scores(0.5, 0.5, 0.0, 0.0);
    r.models["llama-3.2-11b-vision"] = scores(0.0, 0.0, 0.0, 0.0);
    r.models["qwen2.5-vl-32b"].edit_norm = 1.0;
    r.models["qwen2.5-vl-32b"].rouge_m = 0.625;
    r.models["qwen2.5-vl-32b"].bleu = 0.625;
    r.models["llama-3.2-11b-vision"].edit_norm = 1.0;
    EXPECT_NEAR(model_final_score(r.models["qwen2.5-vl-7b"], w), 1.0, 1e-12);
    EXPECT_NEAR(model_final_score(r.models["qwen2.5-vl-32b"], w), 0.5, 1e-12);
    EXPECT_NEAR(model_final_score(r.models["llama-3.2-11b-vision"], w), 0.0, 1e-12);
    EXPECT_NEAR(final_scores({r}, w).scores.at("x"), 0.5, 1e-12);
}

TEST(Final, UniformRecordsEqualTheCommonScore) {
    const auto w = defaults();
    auto s = scores(0.3, 0.7, 0.0, 4.0);
    s.edit_norm = 0.25;
    const auto out = final_scores({uniform("u", s)}, w);
    EXPECT_NEAR(out.scores.at("u"), model_final_score(s, w), 1e-12);
}

TEST(Final, MissingJudgeOrModelExcludes) {
    const auto w = defaults();
    auto missing_judge = uniform("j", scores(0.5, 0.5, 1.0, std::nullopt));
    auto missing_model = uniform("m", scores(0.5, 0.5, 1.0, 5.0));
    missing_model.models.erase("qwen2.5-vl-32b");
    const auto ok = uniform("ok", scores(0.5, 0.5, 1.0, 5.0));
    const auto out = final_scores({missing_judge, missing_model, ok}, w);
    EXPECT_EQ(out.scores.size(), 1u);
    EXPECT_EQ(out.excluded.size(), 2u);
    EXPECT_TRUE(out.scores.count("ok"));
}

TEST(Normalize, MinMaxOverAllModels) {
    std::vector<CurationRecord> recs = {uniform("a", scores(0, 0, 0, 1)), uniform("b", scores(0, 0, 5, 1)),
                                        uniform("c", scores(0, 0, 10, 1))};
    EXPECT_TRUE(normalize_edit(recs));
    EXPECT_DOUBLE_EQ(recs[0].models.begin()->second.edit_norm, 0.0);
    EXPECT_DOUBLE_EQ(recs[1].models.begin()->second.edit_norm, 0.5);
    EXPECT_DOUBLE_EQ(recs[2].models.begin()->second.edit_norm, 1.0);

    std::vector<CurationRecord> flat = {uniform("a", scores(0, 0, 3, 1)), uniform("b", scores(0, 0, 3, 1))};
    EXPECT_FALSE(normalize_edit(flat));
    for (const auto& r : flat) {
        for (const auto& [_, s] : r.models) EXPECT_DOUBLE_EQ(s.edit_norm, 0.0);
    }
}

TEST(Normalize, MatchesFormulaOnRandomRecords) {
    std::mt19937_64 rng(3);
    auto pool = random_pool(rng, 50);
    double lo = 1e300, hi = -1e300;
    for (const auto& r : pool) {
        for (const auto& [_, s] : r.models) lo = std::min(lo, s.edit_raw), hi = std::max(hi, s.edit_raw);
    }
    normalize_edit(pool);
    for (const auto& r : pool) {
        for (const auto& [_, s] : r.models) EXPECT_NEAR(s.edit_norm, (s.edit_raw - lo) / (hi - lo), 1e-12);
    }
}

// Property: more overlap or a higher judge never lowers the final score; more edits never raise it.
TEST(Final, MonotoneInEachInput) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto w = defaults();
    for (int trial = 0; trial < 200; ++trial) {
        auto s = scores(u(rng), u(rng), 0.0, 10.0 * u(rng));
        s.edit_norm = u(rng);
        const double base = model_final_score(s, w);
        auto up = s;
        up.rouge_m += 0.1 * u(rng);
        EXPECT_GE(model_final_score(up, w), base);
        up = s;
        up.bleu += 0.1 * u(rng);
        EXPECT_GE(model_final_score(up, w), base);
        up = s;
        up.judge = *s.judge + u(rng);
        EXPECT_GE(model_final_score(up, w), base);
        up = s;
        up.edit_norm += 0.1 * u(rng);
        EXPECT_LE(model_final_score(up, w), base);
    }
}

TEST(Select, WorkedExamples) {
    const std::map<std::string, double> s = {{"a", 0.9}, {"b", 0.1}, {"c", 0.5}};
    EXPECT_EQ(select_subset(s, 2, Direction::ascending), (std::vector<std::string>{"b", "c"}));
    EXPECT_EQ(select_subset(s, 3, Direction::descending), (std::vector<std::string>{"a", "c", "b"}));
    EXPECT_EQ(select_subset({{"y", 1.0}, {"x", 1.0}}, 2, Direction::ascending),
              (std::vector<std::string>{"x", "y"}));
    EXPECT_EQ(parse_direction("desc"), Direction::descending);
    EXPECT_THROW(parse_direction("sideways"), ConfigError);
}

TEST(Select, LargePoolAndShiftInvariance) {
    std::mt19937_64 rng(21);
    auto pool = random_pool(rng, 7000);
    normalize_edit(pool);
    const auto fs = final_scores(pool, defaults());
    ASSERT_EQ(fs.scores.size(), 7000u);
    const auto picked = select_subset(fs.scores, 1100, Direction::ascending);
    EXPECT_EQ(picked.size(), 1100u);
    EXPECT_EQ(std::set<std::string>(picked.begin(), picked.end()).size(), 1100u);

    auto shifted = fs.scores;
    for (auto& [_, v] : shifted) v += 3.0;
    EXPECT_EQ(select_subset(shifted, 1100, Direction::ascending), picked);
    EXPECT_EQ(select_subset(shifted, 1100, Direction::descending),
              select_subset(fs.scores, 1100, Direction::descending));
}

TEST(Weights, Validation) {
    auto w = defaults();
    EXPECT_NO_THROW(w.validate());
    w.alpha = 0.5;
    EXPECT_THROW(w.validate(), ConfigError);
    w = defaults();
    w.model_weights[0].second = 0.5;
    EXPECT_THROW(w.validate(), ConfigError);
    w = defaults();
    w.judge_coeff = -1.0;
    EXPECT_THROW(w.validate(), ConfigError);
}

TEST(Records, LoadMergesAndRoundTrips) {
    a2r2::testing::TempDir dir("curation");
    const auto path = dir / "scores.jsonl";
    {
        std::ofstream out(path);
        out << R"({"id": "a", "model": "m1", "rouge_m": 0.5, "bleu": 0.25, "edit_raw": 3, "judge": 6})" << "\n";
        out << R"({"id": "b", "model": "m1", "rouge_m": 0.1, "bleu": 0.2, "edit_raw": 7})" << "\n";
        out << "\n";
        out << R"({"id": "a", "model": "m2", "rouge_m": 0.75, "bleu": 0.5, "edit_raw": 1, "judge": 9})" << "\n";
    }
    const auto recs = load_records({path});
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].instance_id, "a");
    EXPECT_EQ(recs[0].models.size(), 2u);
    EXPECT_FALSE(recs[1].models.at("m1").judge);

    // Serialized records reproduce the scores bit for bit.
    const auto again = dir / "again.jsonl";
    {
        std::ofstream out(again);
        for (const auto& r : recs) out << record_to_json(r).dump() << "\n";
    }
    auto w = defaults();
    w.model_weights = {{"m1", 0.5}, {"m2", 0.5}};
    auto first = recs;
    auto second = load_records({again});
    normalize_edit(first);
    normalize_edit(second);
    const auto a = final_scores(first, w), b = final_scores(second, w);
    ASSERT_EQ(a.scores.size(), 1u);
    EXPECT_EQ(a.scores.at("a"), b.scores.at("a"));

    std::ofstream(dir / "bad.jsonl") << R"({"id": "z", "model": "m1", "rouge_m": 2.0, "bleu": 0, "edit_raw": 0})"
                                     << "\n";
    EXPECT_THROW(load_records({dir / "bad.jsonl"}), Error);
}

TEST(Provenance, NamesDirectionAndWeights) {
    const auto w = defaults();
    const auto j = provenance(w, Direction::ascending, 2, 3, FinalScores{});
    const auto text = j.dump();
    EXPECT_NE(text.find("asc"), std::string::npos);
    EXPECT_NE(text.find("qwen2.5-vl-32b"), std::string::npos);
}
